"""Binary-state, binary-action closed forms and the three binary learners (BS, SE, SEJ)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleBias
from .types import BiasInterval, BinaryInstance, Scheme, SchemeBatch

GUARD_TOL = 1e-12  # slack on the "m <= hi" loop guard
HIGH = 1  # atom index of the high posterior in every binary scheme


def nu_cutoff(alpha: float, b: BinaryInstance) -> float:
    """Bayesian-posterior cutoff mu0 + (q_hat - mu0) / alpha (may exceed 1)."""
    return b.mu0 + (b.q_hat - b.mu0) / alpha


def alpha_min_binary(b: BinaryInstance) -> float:
    """Smallest bias at which persuasion is feasible: (q_hat - mu0) / (1 - mu0)."""
    return (b.q_hat - b.mu0) / (1.0 - b.mu0)


def _prior(b: BinaryInstance) -> np.ndarray:
    return np.array([1.0 - b.mu0, b.mu0])


def _two_point_arrays(alphas: np.ndarray, b: BinaryInstance):
    """Weights (K x 2) and posteriors (K x 2 x 2) of scheme(alpha) for each alpha."""
    nu = b.mu0 + (b.q_hat - b.mu0) / alphas
    # the boundary probe sits exactly at nu = 1; rounding may land a hair above
    nu = np.where(np.abs(nu - 1.0) <= 1e-12, 1.0, nu)
    hi_w = b.mu0 / nu
    W = np.stack([1.0 - hi_w, hi_w], axis=1)
    P = np.zeros((len(alphas), 2, 2))
    P[:, 0, 0] = 1.0
    P[:, 1, 0] = 1.0 - nu
    P[:, 1, 1] = nu
    return W, P


def two_point_scheme(alpha: float, b: BinaryInstance) -> Scheme:
    """scheme(alpha): posteriors {0, nu_B(alpha)} recommending actions 0 and 1.

    Raises:
        InfeasibleBias: if alpha < alpha_min_binary(b).
    """
    if alpha <= 0 or alpha < alpha_min_binary(b) - 1e-12:
        raise InfeasibleBias(f"alpha={alpha:.6g} below alpha_min={alpha_min_binary(b):.6g}")
    W, P = _two_point_arrays(np.array([float(alpha)]), b)
    return Scheme(W[0], P[0], (0, 1), _prior(b))


def two_point_batch(alphas, b: BinaryInstance) -> SchemeBatch:
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas < alpha_min_binary(b) - 1e-12):
        raise InfeasibleBias("probe below alpha_min")
    W, P = _two_point_arrays(alphas, b)
    return SchemeBatch(W, P, (0, 1), _prior(b))


def m_star(alpha: float, mu: float, q_hat: float) -> float:
    """Largest state-0 High probability that keeps the High recommendation persuasive.

    Raises:
        InfeasibleBias: if alpha < (q_hat - mu) / (1 - mu).
    """
    if alpha <= 0 or alpha < (q_hat - mu) / (1.0 - mu) - 1e-12:
        raise InfeasibleBias(f"persuasion infeasible at alpha={alpha:.6g}")
    val = mu * (mu * (1.0 - alpha) + alpha - q_hat) / ((1.0 - mu) * (q_hat - (1.0 - alpha) * mu))
    return max(val, 0.0)


def signal_scheme(m: float, mu: float) -> Scheme:
    """Posterior form of pi_m (High w.p. 1 in state 1, w.p. m in state 0) under prior mu."""
    W, P = signal_arrays(np.array([float(m)]), mu)
    return Scheme(W[0], P[0], (0, 1), np.array([1.0 - mu, mu]))


def signal_arrays(ms: np.ndarray, mu: float):
    """Weights and posteriors (Low atom first) of pi_m for each m, computed with prior mu."""
    ms = np.asarray(ms, dtype=float)
    p_high = mu + (1.0 - mu) * ms
    W = np.stack([1.0 - p_high, p_high], axis=1)
    nu = mu / p_high
    P = np.zeros((len(ms), 2, 2))
    P[:, 0, 0] = 1.0
    P[:, 1, 0] = 1.0 - nu
    P[:, 1, 1] = nu
    return W, P


@dataclass
class BinaryScanState:
    """State of a safe-exploration scan inside one phase."""

    interval: BiasInterval
    step: float
    m_prev: float
    m: float
    phase_index: int = 0


def _chunks(first: int = 8, cap: int = 4096):
    size = first
    while True:
        yield size
        size = min(cap, size * 4)


# ---------------------------------------------------------------------------
# Binary Search


def run_bs(T: int, b: BinaryInstance, env):
    """Midpoint probing for M = ceil(2 log2 T) informative epochs, then commit to scheme(lo)."""
    lo, hi = alpha_min_binary(b), 1.0
    env.note_interval((lo, hi))
    M = int(math.ceil(2.0 * math.log2(T))) if T > 1 else 0
    k = 0
    while k < M and env.remaining > 0:
        m = 0.5 * (lo + hi)
        res = env.play_until(two_point_scheme(m, b), (HIGH,))
        if not res.fired:
            break
        if res.action == 1:
            lo = m
        else:
            hi = m
        k += 1
        env.note_interval((lo, hi))
    env.trace.flags["committed_interval"] = (lo, hi)
    env.trace.committed_param = lo
    env.commit(two_point_scheme(lo, b))
    return env.trace


# ---------------------------------------------------------------------------
# Safe Exploration


def _probe_ladder(start: float, step: float, K: int) -> np.ndarray:
    """start + step, start + 2 step, ... by repeated floating addition."""
    return np.cumsum(np.r_[start, np.full(K, step)])[1:]


def run_se(T: int, b: BinaryInstance, env):
    """Safe Exploration: left-to-right scans with squared steps, then commit to scheme(lo).

    Within a phase the probes m = lo + eps, lo + 2 eps, ... are played in
    order, each until its high posterior is realized. Acceptance advances
    the scan; the first rejection brackets [m_prev, m].
    """
    lo, hi, eps = alpha_min_binary(b), 1.0, 0.5
    env.note_interval((lo, hi))
    env.note_phase((lo, hi))
    st = BinaryScanState(BiasInterval(lo, hi), eps, lo, lo + eps)
    while hi - lo > 1.0 / T and env.remaining > 0:
        m_prev = lo
        gen = _chunks()
        new = None
        while env.remaining > 0:
            K = next(gen)
            ms = _probe_ladder(m_prev, eps, K)
            live = ms <= hi + GUARD_TOL
            n_live = int(np.argmin(live)) if not live.all() else K
            if n_live == 0:  # next probe exceeds hi: the scan left the interval
                new = (m_prev, hi)
                break
            ms = ms[:n_live]
            res = env.scan(two_point_batch(ms, b), (HIGH,))
            if res.accepted:
                m_prev = float(ms[res.accepted - 1])
            if res.rejected:
                new = (m_prev, float(ms[res.accepted]))
                break
            if res.truncated:
                break
        st = BinaryScanState(BiasInterval(lo, hi), eps, m_prev, m_prev + eps, st.phase_index)
        if new is None:  # horizon ran out mid-phase
            # every accepted probe is known safe, so [m_prev, hi] still brackets alpha*
            if m_prev > lo:
                lo = m_prev
                env.note_interval((lo, hi))
            env.note_flag("truncated_phase", True)
            break
        lo, hi = new
        eps = eps * eps
        env.note_interval((lo, hi))
        env.note_phase((lo, hi))
        st.phase_index += 1
    env.trace.flags["committed_interval"] = (lo, hi)
    env.trace.flags["phases"] = st.phase_index
    env.trace.committed_param = lo
    env.commit(two_point_scheme(lo, b))
    return env.trace


# ---------------------------------------------------------------------------
# Safe Exploration with unknown prior and bias


def run_sej(T: int, q_hat: float, env):
    """Safe exploration over the implementable family pi_m when prior and bias are both unknown.

    The learner only knows ``q_hat``; it hands candidate leakage values m to
    the environment, which realizes signals under the hidden prior. Low
    signals are skipped, an accepted High advances m by eps and a rejected
    High brackets [m_prev, m]. Commits to pi_a once b - a <= 1/T.
    """
    del q_hat  # the scan itself never needs the cutoff; it only reads accept/reject
    a, bb, eps = 0.0, 1.0, 0.5
    env.note_interval((a, bb))
    env.note_phase((a, bb))
    phases = 0
    while bb - a > 1.0 / T and env.remaining > 0:
        m_prev = a
        nxt = a  # first probe is the left endpoint itself
        gen = _chunks()
        new = None
        while env.remaining > 0:
            K = next(gen)
            ms = np.cumsum(np.r_[nxt, np.full(K - 1, eps)])
            live = ms <= bb + GUARD_TOL
            n_live = int(np.argmin(live)) if not live.all() else K
            if n_live == 0:
                new = (m_prev, bb)
                break
            ms = np.minimum(ms[:n_live], 1.0)
            res = env.scan_signals(ms)
            if res.accepted:
                m_prev = float(ms[res.accepted - 1])
                nxt = m_prev + eps
            if res.rejected:
                new = (m_prev, float(ms[res.accepted]))
                break
            if res.truncated:
                break
        if new is None:  # horizon ran out mid-phase; accepted probes stay known-safe
            if m_prev > a:
                a = m_prev
                env.note_interval((a, bb))
            env.note_flag("truncated_phase", True)
            break
        a, bb = new
        eps = eps * eps
        env.note_interval((a, bb))
        env.note_phase((a, bb))
        phases += 1
    env.trace.flags["committed_interval"] = (a, bb)
    env.trace.flags["phases"] = phases
    env.trace.committed_param = a
    env.commit_signal(a)
    return env.trace
