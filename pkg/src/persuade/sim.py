"""Seeded environment for the repeated persuasion protocol, regret accounting and aggregation.

Randomness comes from counter-based Philox generators keyed by
(master seed, trial index, stream id): stream 0 draws states, stream 1 draws
signals. In realized-form accounting, streams 2 and 3 fill in the rounds of
a wait that realized a non-watched atom, so the core streams are consumed
identically in both accounting forms.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MixedHorizons
from .geometry import relevant_actions
from .receiver import best_response_batch
from .types import BiasInterval, Instance, Scheme, SchemeBatch, SegmentBlock, Trace

# Indifference tolerance of the simulated receiver. Much tighter than the
# library default: at fine interval scales a 1e-9 utility tie shifts the
# simulated switch point by about 2e-9 in bias, which breaks the interval
# invariant and flattens binary search below that resolution.
ENV_TIE_TOL = 1e-14

STATE_STREAM, SIGNAL_STREAM, FILL_SIGNAL_STREAM, FILL_STATE_STREAM = 0, 1, 2, 3


class _Uniforms:
    """Buffered uniform stream; values are handed out strictly in order."""

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self.rng = rng
        self.block = block
        self.buf = np.empty(0)
        self.pos = 0

    def peek(self, k: int) -> np.ndarray:
        if self.pos + k > len(self.buf):
            extra = max(self.block, k)
            self.buf = np.concatenate([self.buf[self.pos:], self.rng.random(extra)])
            self.pos = 0
        return self.buf[self.pos:self.pos + k]

    def take(self, k: int) -> np.ndarray:
        out = self.peek(k).copy()
        self.pos += k
        return out

    def advance(self, k: int):
        self.pos += k


def make_rng(master: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master, trial, stream])))


def benchmark_value(inst: Instance, alpha_star: float) -> float:
    """Full-information one-round optimum OPT(inst, alpha*): the safe LP at J = {alpha*}."""
    from .general import safe_lp

    return float(safe_lp(BiasInterval(alpha_star, alpha_star), inst)[0])


@dataclass(frozen=True)
class RoundRecord:
    state: int
    atom: int
    action: int
    u_s: float
    u_r: float


@dataclass(frozen=True)
class WaitResult:
    """Outcome of playing one scheme until a watched atom fires (or rounds run out)."""

    rounds: int
    fired: bool
    atom: int = -1
    action: int = -1
    state: int = -1


@dataclass(frozen=True)
class ScanResult:
    """Outcome of a scan: members played in order while the receiver follows recommendations."""

    played: int
    accepted: int
    rejected: bool
    truncated: bool
    rounds: int
    last_atom: int = -1
    last_action: int = -1


def _categorical(u: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Index drawn from each row of P (rows sum to 1) by inverse CDF at u."""
    c = np.cumsum(P, axis=-1)
    c[..., -1] = np.inf
    return (u[..., None] >= c).sum(axis=-1)


class Environment:
    """The interaction protocol against a receiver with bias ``alpha_star``.

    Each round a state is drawn from the prior and the scheme's atom is drawn
    given the state with probability w_i nu_i(w) / mu0(w); the receiver best
    responds to the atom's posterior restricted to the actions relevant at
    alpha_star, breaking ties in the sender's favour.

    Args:
        inst: the instance (with the true prior).
        alpha_star: the receiver's bias.
        horizon: number of rounds T.
        seed: (master seed, trial index).
        regret_form: "expected" or "realized".
        tie_tol: indifference tolerance of the receiver (default ENV_TIE_TOL).
    """

    def __init__(self, inst: Instance, alpha_star: float, horizon: int, seed=(42, 0),
                 regret_form: str = "expected", tie_tol: float | None = None):
        if regret_form not in ("expected", "realized"):
            raise ValueError("regret_form must be 'expected' or 'realized'")
        self.inst = inst
        self.alpha = float(alpha_star)
        self.horizon = int(horizon)
        self.seed = tuple(seed)
        self.regret_form = regret_form
        self.tie_tol = ENV_TIE_TOL if tie_tol is None else float(tie_tol)
        self.t = 0
        master, trial = self.seed
        self._state_u = _Uniforms(make_rng(master, trial, STATE_STREAM))
        self._signal_u = _Uniforms(make_rng(master, trial, SIGNAL_STREAM))
        self._fill_sig = make_rng(master, trial, FILL_SIGNAL_STREAM)
        self._fill_state = make_rng(master, trial, FILL_STATE_STREAM)
        self.allowed = relevant_actions(BiasInterval(self.alpha, self.alpha), inst)
        self.opt = benchmark_value(inst, self.alpha)
        self.trace = Trace(self.horizon, self.opt)

    # -- bookkeeping hooks used by algorithms ------------------------------
    @property
    def remaining(self) -> int:
        return self.horizon - self.t

    def note_interval(self, J):
        lo, hi = J
        self.trace.interval_history.append((self.t, float(lo), float(hi)))

    def note_phase(self, J):
        lo, hi = J
        self.trace.phase_intervals.append((float(lo), float(hi)))

    def note_flag(self, key, value):
        self.trace.flags[key] = value

    # -- receiver ----------------------------------------------------------
    def respond(self, posteriors) -> np.ndarray:
        return best_response_batch(posteriors, self.alpha, self.inst, self.allowed, self.tie_tol)

    def _values(self, batch: SchemeBatch):
        acts = self.respond(batch.posteriors)  # K x k
        us = np.einsum("jkn,jkn->jk", batch.posteriors, self.inst.u_sender[acts])
        return (batch.weights * us).sum(axis=1), acts

    # -- waits ---------------------------------------------------------------
    def _waits(self, p: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Geometric(p) waits (>= 1) by inverse CDF; p = 0 gives an infinite wait."""
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(p >= 1.0, 1.0, 1.0 + np.floor(np.log(u) / np.log1p(-p)))
        w = np.where(p <= 0.0, np.inf, w)
        return w

    def _record(self, batch: SchemeBatch, lengths, fired_atom, state, action, values, acts, watch):
        inst = self.inst
        ok = fired_atom >= 0
        us = np.where(ok, inst.u_sender[np.maximum(action, 0), np.maximum(state, 0)], np.nan)
        ur = np.where(ok, inst.u_receiver[np.maximum(action, 0), np.maximum(state, 0)], np.nan)
        realized = None
        if self.regret_form == "realized":
            realized = self._fill(batch, lengths, ok, us, acts, watch)
        blk = SegmentBlock(self.t, lengths.astype(np.int64), values, fired_atom, state, action, us, ur,
                           batch, realized)
        self.trace.blocks.append(blk)
        self.t += int(lengths.sum())
        tr = self.trace
        tr.n_schemes += len(lengths)
        res = float(batch.residuals[: len(lengths)].max()) if len(lengths) else 0.0
        tr.max_bayes_residual = max(tr.max_bayes_residual, res)
        if batch.repaired:
            tr.n_repaired += len(lengths)
            tr.max_repair_residual = max(tr.max_repair_residual, res)

    def _fill(self, batch, lengths, ok, us_fired, acts, watch):
        """Realized sender utility for every round (non-watched atoms in filler rounds)."""
        inst = self.inst
        out = []
        unwatched = np.ones(batch.weights.shape[1], dtype=bool)
        unwatched[list(watch)] = False
        for j, L in enumerate(lengths):
            L = int(L)
            nfill = L - 1 if ok[j] else L
            w = batch.weights[j] * unwatched
            vals = np.zeros(nfill)
            if nfill and w.sum() > 0:
                atoms = self._fill_sig.choice(len(w), size=nfill, p=w / w.sum())
                P = batch.posteriors[j]
                u = self._fill_state.random(nfill)
                states = _categorical(u, P[atoms])
                vals = inst.u_sender[acts[j][atoms], states]
            if ok[j]:
                vals = np.r_[vals, us_fired[j]]
            out.append(vals)
        return np.concatenate(out) if out else np.zeros(0)

    # -- protocol ------------------------------------------------------------
    def step(self, scheme: Scheme) -> RoundRecord:
        """Play exactly one round of ``scheme``."""
        if self.remaining <= 0:
            raise RuntimeError("horizon exhausted")
        inst = self.inst
        batch = SchemeBatch.of(scheme)
        u_state = self._state_u.take(1)
        u_sig = self._signal_u.take(1)
        state = int(_categorical(u_state, inst.prior[None])[0])
        cond = scheme.weights * scheme.posteriors[:, state] / inst.prior[state]
        cond = cond / cond.sum()
        atom = int(_categorical(u_sig, cond[None])[0])
        values, acts = self._values(batch)
        action = int(acts[0, atom])
        self._record(batch, np.array([1]), np.array([atom]), np.array([state]), np.array([action]),
                     values, acts, watch=range(len(scheme)))
        return RoundRecord(state, atom, action, float(inst.u_sender[action, state]),
                           float(inst.u_receiver[action, state]))

    def play_until(self, scheme: Scheme, watch, max_rounds: int | None = None) -> WaitResult:
        """Play ``scheme`` until an atom in ``watch`` is realized.

        Equivalent in law to repeated single rounds: the wait is geometric
        with success probability sum of watched weights, the realized atom is
        proportional to weight among watched atoms, and the state is drawn
        from that atom's posterior.
        """
        res = self.scan(SchemeBatch.of(scheme), watch, max_rounds=max_rounds, stop_on_reject=False)
        if res.truncated or res.played == 0:
            return WaitResult(res.rounds, False)
        return WaitResult(res.rounds, res.last_atom >= 0, res.last_atom, res.last_action,
                          int(self.trace.blocks[-1].state[-1]))

    def scan(self, batch: SchemeBatch, watch, max_rounds: int | None = None,
             stop_on_reject: bool = True) -> ScanResult:
        """Play the members of ``batch`` in order, each until a watched atom fires.

        After each informative round the scan moves to the next member if the
        receiver followed the fired atom's recommendation and stops otherwise.
        Stops early when the horizon (or ``max_rounds``) is reached.
        """
        watch = tuple(int(i) for i in watch)
        K = len(batch)
        cap = self.remaining if max_rounds is None else min(self.remaining, int(max_rounds))
        if K == 0 or cap <= 0:
            return ScanResult(0, 0, False, cap <= 0, 0)
        if not watch:  # nothing can fire: the first member runs to the cap
            first = batch if K == 1 else SchemeBatch(batch.weights[:1], batch.posteriors[:1], batch.actions,
                                                     batch.prior, batch.repaired)
            values, acts = self._values(first)
            m1 = np.array([-1])
            self._record(first, np.array([cap]), m1, m1, m1, values, acts, watch)
            return ScanResult(1, 0, False, True, cap)
        W = batch.weights[:, watch]
        p = W.sum(axis=1)
        us = self._signal_u.peek(2 * K).reshape(K, 2)
        ust = self._state_u.peek(K)
        waits = self._waits(p, us[:, 0])
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = W / p[:, None]
        cond = np.where(np.isfinite(cond), cond, 1.0 / len(watch))
        fired_local = _categorical(us[:, 1], cond)
        fired = np.asarray(watch)[fired_local]
        post = batch.posteriors[np.arange(K), fired]
        states = _categorical(ust, post)
        values, acts = self._values(batch)
        actions = acts[np.arange(K), fired]
        recs = np.asarray(batch.actions)[fired]
        follow = actions == recs
        # members actually reached: up to and including the first non-follow
        if stop_on_reject and not follow.all():
            n_reach = int(np.argmin(follow)) + 1
        else:
            n_reach = K if stop_on_reject else 1
        cum = np.cumsum(waits[:n_reach])
        over = np.flatnonzero(cum > cap)
        truncated = over.size > 0
        n_play = int(over[0]) + 1 if truncated else n_reach
        lengths = waits[:n_play].copy()
        fa = fired[:n_play].copy()
        st = states[:n_play].copy()
        ac = actions[:n_play].copy()
        if truncated:
            lengths[-1] = cap - (cum[n_play - 2] if n_play >= 2 else 0)
            fa[-1] = st[-1] = ac[-1] = -1
        self._signal_u.advance(2 * n_play)
        self._state_u.advance(n_play)
        lengths = lengths.astype(np.int64)
        sub = batch if n_play == K else SchemeBatch(batch.weights[:n_play], batch.posteriors[:n_play],
                                                    batch.actions, batch.prior, batch.repaired)
        self._record(sub, lengths, fa, st, ac, values[:n_play], acts[:n_play], watch)
        n_acc = int(follow[:n_play].sum()) - (1 if truncated and follow[n_play - 1] else 0)
        rejected = (not truncated) and (not bool(follow[n_play - 1]))
        return ScanResult(n_play, n_acc, rejected, truncated, int(lengths.sum()),
                          int(fa[-1]), int(ac[-1]))

    # -- signal-form play (the learner does not know the prior) ------------
    def _signal_batch(self, ms) -> SchemeBatch:
        from .binary import signal_arrays

        if self.inst.n_states != 2:
            raise ValueError("signal-form play needs a binary instance")
        W, P = signal_arrays(np.asarray(ms, dtype=float), float(self.inst.prior[1]))
        return SchemeBatch(W, P, (0, 1), self.inst.prior)

    def scan_signals(self, ms, max_rounds: int | None = None) -> ScanResult:
        """Scan the family pi_m (High always in state 1, w.p. m in state 0) over ``ms``."""
        return self.scan(self._signal_batch(ms), (1,), max_rounds=max_rounds)

    def commit_signal(self, m: float):
        self.commit(self._signal_batch([m])[0])

    def commit(self, scheme: Scheme):
        """Play ``scheme`` for all remaining rounds."""
        self.trace.committed = scheme
        L = self.remaining
        if L <= 0:
            return
        batch = SchemeBatch.of(scheme)
        values, acts = self._values(batch)
        self._record(batch, np.array([L]), np.array([-1]), np.array([-1]), np.array([-1]), values, acts,
                     watch=())


# ---------------------------------------------------------------------------
# trials


@dataclass
class RegretSeries:
    """Cumulative regret of one trial, evaluated lazily from its segments.

    ``values`` materializes the length-T vector; ``at`` evaluates it on any
    round grid without building it.
    """

    horizon: int
    opt: float
    trace: Trace = field(repr=False)
    form: str = "expected"
    algo: str = ""
    seed: tuple = ()
    truth: float = float("nan")  # alpha* (m* for SEJ)

    def at(self, rounds) -> np.ndarray:
        rounds = np.asarray(rounds, dtype=np.int64)
        return self.trace.cumulative_regret(np.minimum(rounds, self.trace.rounds_used), self.form)

    @property
    def final(self) -> float:
        return float(self.at([self.horizon])[0]) if self.horizon else 0.0

    @property
    def values(self) -> np.ndarray:
        """Cumulative regret after rounds 1..T (length T)."""
        return self.at(np.arange(1, self.horizon + 1))

    def __len__(self):
        return self.horizon


ALGOS = ("bs", "se", "gse", "sej")


def run_trial(algo: str, T: int, inst, alpha_star: float, seed=(42, 0), regret_form: str = "expected",
              env_factory=None) -> RegretSeries:
    """Run one algorithm for T rounds and return its regret series (with the trace attached).

    ``inst`` is a BinaryInstance for bs/se/sej (for sej its mu0 is the hidden
    true prior) and an Instance or BinaryInstance for gse.
    """
    from . import binary as bin_
    from . import general as gen
    from .types import BinaryInstance, binary_as_general

    algo = algo.lower()
    if algo not in ALGOS:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGOS}")
    if algo in ("bs", "se", "sej") and not isinstance(inst, BinaryInstance):
        raise ValueError(f"{algo} needs a binary instance")
    general_inst = binary_as_general(inst) if isinstance(inst, BinaryInstance) else inst
    make = env_factory or Environment
    env = make(general_inst, alpha_star, T, seed=seed, regret_form=regret_form)
    truth = float(alpha_star)
    if algo == "sej":
        amin = bin_.alpha_min_binary(inst)
        truth = bin_.m_star(alpha_star, inst.mu0, inst.q_hat) if alpha_star >= amin else float("nan")
    if T > 0:
        if algo == "bs":
            bin_.run_bs(T, inst, env)
        elif algo == "se":
            bin_.run_se(T, inst, env)
        elif algo == "sej":
            bin_.run_sej(T, inst.q_hat, env)
        else:
            gen.run_gse(T, general_inst, env)
    return RegretSeries(T, env.opt, env.trace, regret_form, algo, tuple(seed), truth)


def _trial_job(args):
    return run_trial(*args)


def thread_cap() -> int:
    """Worker count: the CPU count, capped by PERSUADE_THREADS when set."""
    n = os.cpu_count() or 1
    env = os.environ.get("PERSUADE_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            pass
    return n


def run_trials(algo, T, inst, alpha_star, n_seeds, master=42, regret_form="expected", threads=None,
               keep_blocks: bool = False, on_trial=None, grid=None) -> list:
    """Run trials with seeds (master, 0..n_seeds-1), in parallel when allowed.

    Args:
        keep_blocks: keep the full segment record of each trace. By default
            the record is compacted onto ``grid`` (a log grid if omitted)
            after ``on_trial`` has seen the full series, which bounds memory
            for large sweeps while keeping regret exact on the grid.
        on_trial: optional callback receiving each full RegretSeries in seed order.

    Returns:
        List of RegretSeries in seed order.
    """
    threads = thread_cap() if threads is None else threads
    jobs = [(algo, T, inst, alpha_star, (master, i), regret_form) for i in range(n_seeds)]
    out = []

    def _reduce(r):
        if on_trial is not None:
            on_trial(r)
        if not keep_blocks:
            r = _compact(r, grid)
        out.append(r)

    if threads > 1 and n_seeds > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            for r in ex.map(_trial_job, jobs, chunksize=max(1, n_seeds // (4 * threads))):
                _reduce(r)
    else:
        for j in jobs:
            _reduce(run_trial(*j))
    return out


def _compact(r: RegretSeries, grid=None) -> RegretSeries:
    """Shrink the segment record to one segment per grid interval.

    Cumulative regret stays exact at the grid points (and at the rounds used)
    and becomes linear in between. Interval histories, phase records and
    residual counters are untouched.
    """
    tr = r.trace
    used = tr.rounds_used
    if r.form == "realized" or used == 0 or len(tr.blocks) <= 1:
        return r
    grid = default_grid(r.horizon) if grid is None else np.asarray(grid, dtype=np.int64)
    pts = np.unique(np.r_[grid[(grid > 0) & (grid < used)], used]).astype(np.int64)
    cum = tr.cumulative_regret(pts)
    L = np.diff(np.r_[0, pts])
    v = tr.opt - np.diff(np.r_[0.0, cum]) / L
    K = len(L)
    none = np.full(K, -1)
    ref = tr.committed if tr.committed is not None else tr.blocks[-1].schemes[0]
    batch = SchemeBatch(np.broadcast_to(ref.weights, (K, len(ref))), np.broadcast_to(
        ref.posteriors, (K,) + ref.posteriors.shape), ref.actions, ref.prior, ref.repaired)
    tr.blocks = [SegmentBlock(0, L, v, none, none, none, np.full(K, np.nan), np.full(K, np.nan), batch)]
    tr.flags["compacted"] = True
    return r


def default_grid(T: int, points: int = 200) -> np.ndarray:
    """Round counts at which curves are reported: all rounds for small T, else a log grid."""
    if T <= points:
        return np.arange(1, T + 1, dtype=np.int64)
    g = np.unique(np.round(np.logspace(0, math.log10(T), points)).astype(np.int64))
    return np.unique(np.r_[g, T])


@dataclass(frozen=True)
class Aggregate:
    rounds: np.ndarray
    mean: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n: int


def aggregate(series, rounds=None) -> Aggregate:
    """Pointwise mean and normal-approximation 95% CI across trials.

    Args:
        series: list of RegretSeries (or equal-length arrays of cumulative regret).
        rounds: optional round grid; default is every round 1..T.

    Raises:
        MixedHorizons: if the series have different horizons.
    """
    if not len(series):
        raise ValueError("no series to aggregate")
    if isinstance(series[0], RegretSeries):
        hs = {s.horizon for s in series}
        if len(hs) > 1:
            raise MixedHorizons(f"horizons differ: {sorted(hs)}")
        T = hs.pop()
        rounds = np.arange(1, T + 1) if rounds is None else np.asarray(rounds)
        M = np.array([s.at(rounds) for s in series]).reshape(len(series), len(rounds))
    else:
        lens = {len(s) for s in series}
        if len(lens) > 1:
            raise MixedHorizons(f"series lengths differ: {sorted(lens)}")
        M = np.array(series, dtype=float)
        rounds = np.arange(1, M.shape[1] + 1) if rounds is None else np.asarray(rounds)
    n = M.shape[0]
    mean = M.mean(axis=0)
    sd = M.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    half = 1.959963984540054 * sd / math.sqrt(n)
    return Aggregate(np.asarray(rounds), mean, mean - half, mean + half, n)
