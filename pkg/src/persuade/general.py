"""General Safe Exploration: localization, interval-safe vertex schemes, probes and commitment."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import lp as lpmod
from .errors import BudgetExhausted, Infeasible, InfeasibleProjection
from .geometry import (
    LOWER,
    UPPER,
    VertexAtom,
    delta_mu0,
    project_active_set,
    project_with_active,
    relevant_actions,
    repair_bayes,
    repair_bayes_batch,
    safe_region,
    vertex_decompose,
)
from .receiver import default_action
from .types import BiasInterval, Instance, Scheme, SchemeBatch

TOL_INFO = 1e-9  # below this the threshold-test LP carries no non-default mass
ALPHA_MIN_TOL = 1e-6


# ---------------------------------------------------------------------------
# threshold test


@dataclass(frozen=True)
class ThresholdScheme:
    beta: float
    scheme: Scheme
    objective: float
    watch: tuple  # atom indices recommending a non-default action


def _threshold_lp(beta: float, inst: Instance):
    n, k = inst.n_states, inst.n_actions
    a0 = default_action(inst)
    mu = inst.prior
    idx = lambda a, w: a * n + w  # noqa: E731
    ge_rows, eq_rows, eq_rhs = [], [], []
    for a in range(k):
        for b in range(k):
            if b == a:
                continue
            du = inst.u_receiver[a] - inst.u_receiver[b]
            coef = mu * (beta * du + (1.0 - beta) * (du @ mu))
            row = np.zeros(n * k)
            row[a * n:(a + 1) * n] = coef
            if b == a0:
                eq_rows.append(row)
                eq_rhs.append(0.0)
            ge_rows.append(row)
    for w in range(n):
        row = np.zeros(n * k)
        row[[idx(a, w) for a in range(k)]] = 1.0
        eq_rows.append(row)
        eq_rhs.append(1.0)
    c = np.zeros(n * k)
    for a in range(k):
        if a != a0:
            c[a * n:(a + 1) * n] = mu
    sol = lpmod.solve(lpmod.LinearProgram(c, "max", A_eq=np.array(eq_rows), b_eq=eq_rhs,
                                          A_ge=np.array(ge_rows), b_ge=np.zeros(len(ge_rows))))
    return sol, a0


def threshold_test_lp(beta: float, inst: Instance) -> ThresholdScheme:
    """Direct-recommendation scheme whose non-default posteriors sit on the a/a0 indifference at beta.

    The LP always admits the all-default solution, so "infeasible" means the
    optimum carries no non-default mass.

    Raises:
        Infeasible: if the optimal non-default mass is at most TOL_INFO.
    """
    return _threshold_cached(float(beta), inst)


@lru_cache(maxsize=4096)
def _threshold_cached(beta, inst):
    sol, a0 = _threshold_lp(beta, inst)
    if sol.objective_value <= TOL_INFO:
        raise Infeasible(f"no non-default mass at beta={beta:.6g}")
    n, k = inst.n_states, inst.n_actions
    joint = sol.point.reshape(k, n) * inst.prior
    lam = joint.sum(axis=1)
    keep = np.flatnonzero(lam > 1e-13)
    W = lam[keep] / lam[keep].sum()
    P = joint[keep] / lam[keep, None]
    scheme = Scheme(W, P, tuple(int(a) for a in keep), inst.prior)
    watch = tuple(i for i, a in enumerate(scheme.actions) if a != a0)
    return ThresholdScheme(beta, scheme, float(sol.objective_value), watch)


def threshold_feasible(beta: float, inst: Instance) -> bool:
    try:
        threshold_test_lp(beta, inst)
        return True
    except Infeasible:
        return False


@lru_cache(maxsize=256)
def alpha_min_general(inst: Instance, tol: float = ALPHA_MIN_TOL) -> float:
    """Smallest detectable bias, by bisection on threshold-test feasibility.

    Returns the feasible end of the final bracket, or inf when no test is
    feasible even at beta = 1 (persuasion impossible for every bias).
    """
    if not threshold_feasible(1.0, inst):
        return math.inf
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if threshold_feasible(mid, inst):
            hi = mid
        else:
            lo = mid
    return hi


def run_threshold_test(J: BiasInterval, beta: float, env, budget: int | None = None) -> BiasInterval:
    """Play the threshold scheme at beta until a non-default recommendation is realized.

    Raises:
        BudgetExhausted: if ``budget`` rounds pass without a non-default recommendation.
    """
    ts = threshold_test_lp(beta, env.inst)
    if budget is None:
        budget = int(math.ceil(64.0 / ts.objective))
    res = env.play_until(ts.scheme, ts.watch, max_rounds=budget)
    if not res.fired:
        raise BudgetExhausted(f"threshold test at beta={beta:.6g} saw no informative round in {res.rounds}")
    a0 = default_action(env.inst)
    if res.action == a0:
        return BiasInterval(J.lo, beta)
    return BiasInterval(beta, J.hi)


def _test_with_retry(J, beta, env):
    for attempt in range(2):
        try:
            return run_threshold_test(J, beta, env)
        except BudgetExhausted:
            if env.remaining == 0:
                return None
            if attempt == 1:
                raise
    return None


@dataclass(frozen=True)
class Localization:
    interval: BiasInterval
    infeasible: bool
    alpha_min: float


def localize(inst: Instance, env, T: int) -> Localization:
    """Threshold-test bisection from [alpha_min, 1] down to length 1/log T.

    A first test at alpha_min detects the regime where the bias is too small
    for any persuasion; the caller then plays the uninformative scheme.
    """
    amin = alpha_min_general(inst)
    if not math.isfinite(amin):
        return Localization(BiasInterval(1.0, 1.0), True, amin)
    J = BiasInterval(amin, 1.0)
    env.note_interval(J)
    target = 1.0 / math.log(T) if T > math.e else math.inf
    first = _test_with_retry(J, amin, env)
    if first is None:
        return Localization(J, False, amin)
    if first.hi == amin:  # receiver stayed with a0 at the lowest detectable bias
        env.note_flag("infeasible_regime", True)
        return Localization(first, True, amin)
    while J.length > target and env.remaining > 0:
        nxt = _test_with_retry(J, J.midpoint, env)
        if nxt is None:
            break
        J = nxt
        env.note_interval(J)
    return Localization(J, False, amin)


# ---------------------------------------------------------------------------
# interval-safe schemes


def safe_lp(J, inst: Instance, allowed=None):
    """Safe direct-recommendation LP on J; returns (value, joint x as k x n).

    Actions outside ``allowed`` (default: relevant actions on J) get x = 0.
    """
    J = J if isinstance(J, BiasInterval) else BiasInterval(*J)
    if allowed is None:
        allowed = relevant_actions(J, inst)
    n, k = inst.n_states, inst.n_actions
    rows = []
    for a in allowed:
        reg = safe_region(a, J, inst)
        for i in range(reg.m):
            row = np.zeros(n * k)
            row[a * n:(a + 1) * n] = reg.A[i] - reg.b[i]
            rows.append(row)
    A_eq = np.zeros((n, n * k))
    for w in range(n):
        A_eq[w, w::n] = 1.0
    bounds = [((0.0, np.inf) if a in allowed else (0.0, 0.0)) for a in range(k) for _ in range(n)]
    sol = lpmod.solve(lpmod.LinearProgram(
        inst.u_sender.ravel(), "max", A_eq=A_eq, b_eq=inst.prior,
        A_ge=np.array(rows).reshape(-1, n * k), b_ge=np.zeros(len(rows)), bounds=bounds))
    if not sol.optimal:
        raise lpmod.NumericalFailure(f"safe LP returned {sol.status}")
    return sol.objective_value, sol.point.reshape(k, n)


@dataclass(frozen=True, eq=False)
class VertexScheme:
    """Interval-safe scheme supported on region vertices.

    ``informative_ids`` index atoms with a chosen movable binding constraint.
    """

    interval: BiasInterval
    atoms: tuple
    informative_ids: tuple
    p_info: float
    scheme: Scheme
    value: float

    @property
    def tags(self) -> tuple:
        return tuple(self.atoms[i][1].movable_binding[1] for i in self.informative_ids)


def choose_movable_binding(atom: VertexAtom, region) -> tuple | None:
    """Movable binding IC constraint with the largest |du . mu0|; ties to the lowest loser index."""
    best = None
    for cid in sorted(i for i in atom.binding if i < region.m):
        c = region.constraints[cid]
        if not c.movable:
            continue
        if best is None or abs(c.c_coeff) > abs(region.constraints[best].c_coeff) + 1e-12:
            best = cid
    if best is None:
        return None
    return best, region.constraints[best].binding_tag


def vertex_safe_scheme(J, inst: Instance) -> VertexScheme:
    """Solve the safe LP on J and decompose each action posterior into region vertices."""
    J = J if isinstance(J, BiasInterval) else BiasInterval(*J)
    return _vertex_safe_cached(J.lo, J.hi, inst)


@lru_cache(maxsize=2048)
def _vertex_safe_cached(lo, hi, inst):
    J = BiasInterval(lo, hi)
    value, x = safe_lp(J, inst)
    lam = x.sum(axis=1)
    atoms = []
    for a in np.flatnonzero(lam > 1e-12):
        reg = safe_region(int(a), J, inst)
        nu_bar = x[a] / lam[a]
        nu_bar = np.maximum(nu_bar, 0.0) / np.maximum(nu_bar, 0.0).sum()
        for g, va in vertex_decompose(nu_bar, reg):
            mb = choose_movable_binding(va, reg)
            atoms.append((lam[a] * g, VertexAtom(va.vertex, va.action, va.binding, mb)))
    W = np.array([w for w, _ in atoms])
    W = W / W.sum()
    atoms = tuple((float(w), at) for w, (_, at) in zip(W, atoms))
    P = np.array([at.vertex for _, at in atoms])
    scheme = Scheme(W, P, tuple(at.action for _, at in atoms), inst.prior)
    val = float(sum(w * (inst.u_sender[at.action] @ at.vertex) for w, at in atoms))
    info = tuple(i for i, (_, at) in enumerate(atoms) if at.movable_binding is not None)
    if val >= float(inst.prior @ inst.u_sender.max(axis=0)) - 1e-12:
        info = ()  # already at the full-information ceiling: nothing left to learn
    p_info = float(sum(atoms[i][0] for i in info))
    return VertexScheme(J, atoms, info, p_info, scheme, val)


# ---------------------------------------------------------------------------
# probes


@dataclass(frozen=True, eq=False)
class ProbeScheme:
    base: VertexScheme
    probes: dict  # informative id -> (posterior, m, tag)
    scheme: Scheme  # Bayes-plausible after repair
    correction: int | None  # index of the repair atom in scheme, if any


def _probe_point(base: VertexScheme, i: int, m: float, inst: Instance):
    _, atom = base.atoms[i]
    reg = safe_region(atom.action, base.interval, inst)
    cid, tag = atom.movable_binding
    new_rhs = reg.constraints[cid].rhs(m)
    return project_active_set(atom.vertex, reg, cid, new_rhs)


def build_probe(base: VertexScheme, l: float, r: float, eta: float, inst: Instance) -> ProbeScheme:
    """Move every informative vertex across its pinned boundary to b(m), then repair.

    Lower-tagged atoms probe m = l + eta, Upper-tagged atoms m = r - eta.

    Raises:
        RepairOutOfSimplex: if the correction posterior leaves the simplex.
    """
    P = base.scheme.posteriors.copy()
    probes = {}
    for i in base.informative_ids:
        tag = base.atoms[i][1].movable_binding[1]
        m = l + eta if tag == LOWER else r - eta
        v, _ = _probe_point(base, i, m, inst)
        P[i] = v
        probes[i] = (v, m, tag)
    a0 = default_action(inst)
    s = repair_bayes((base.scheme.weights, P, base.scheme.actions), inst.prior,
                     safe_region(a0, base.interval, inst), delta_mu0(inst))
    corr = len(base.atoms) if len(s) > len(base.atoms) else None
    return ProbeScheme(base, probes, s, corr)


def probe_batch(base: VertexScheme, ms: np.ndarray, inst: Instance) -> SchemeBatch:
    """Probe schemes for a sequence of probe values when all informative atoms share a tag.

    Member j moves every informative vertex to b(ms[j]). Projections reuse a
    verified fixed active set where possible and fall back to the full
    active-set solve elsewhere. Every member carries a (possibly zero-weight)
    correction atom, so all members share one layout.
    """
    ms = np.asarray(ms, dtype=float)
    K = len(ms)
    P = np.broadcast_to(base.scheme.posteriors, (K,) + base.scheme.posteriors.shape).copy()
    for i in base.informative_ids:
        _, atom = base.atoms[i]
        reg = safe_region(atom.action, base.interval, inst)
        cid, _ = atom.movable_binding
        c = reg.constraints[cid]
        rhs = (ms - 1.0) / ms * c.c_coeff
        done = np.zeros(K, dtype=bool)
        j = 0
        while j < K:
            x, W = project_active_set(atom.vertex, reg, cid, rhs[j])
            P[j, i] = x
            done[j] = True
            X, ok = project_with_active(atom.vertex, reg, cid, W, rhs[j + 1:])
            # accept the contiguous run that keeps the same active set
            bad = np.flatnonzero(~ok)
            run = len(ok) if bad.size == 0 else int(bad[0])
            P[j + 1:j + 1 + run, i] = X[:run]
            j = j + 1 + run
    W = np.broadcast_to(base.scheme.weights, (K, len(base.atoms)))
    a0 = default_action(inst)
    return repair_bayes_batch(W, P, base.scheme.actions, inst.prior, a0, delta_mu0(inst))


# ---------------------------------------------------------------------------
# safe exploration


def _chunks(first: int = 8, cap: int = 4096):
    size = first
    while True:
        yield size
        size = min(cap, size * 4)


def _probe_feasible(base: VertexScheme, i: int, m: float, inst: Instance) -> bool:
    try:
        _probe_point(base, i, m, inst)
        return True
    except InfeasibleProjection:
        return False


def _prune(base: VertexScheme, m_of, inst: Instance, env) -> VertexScheme:
    """Drop informative atoms whose probe at ``m_of(tag)`` has an empty modified region.

    The feasible right-hand sides of the pinned row form an interval that
    contains the current one, so checking the farthest probe of a run covers
    every nearer one. A dropped atom stays at its interval-safe vertex.
    """
    keep = tuple(i for i in base.informative_ids
                 if _probe_feasible(base, i, m_of(base.atoms[i][1].movable_binding[1]), inst))
    if keep == base.informative_ids:
        return base
    env.note_flag("dropped_probe", True)
    return replace(base, informative_ids=keep, p_info=float(sum(base.atoms[i][0] for i in keep)))


def safe_explore(J: BiasInterval, inst: Instance, env):
    """One fixed-interval safe-exploration phase.

    Returns:
        (new interval, base vertex scheme, completed) where ``completed`` is
        False when the horizon ran out mid-phase.
    """
    base = vertex_safe_scheme(J, inst)
    if base.p_info == 0.0:
        return J, base, True
    eta = max(J.length ** 2, 1e-12)
    l, r = J.lo, J.hi
    tags = set(base.tags)
    watch = base.informative_ids
    if len(tags) == 1:
        tag = tags.pop()
        gen = _chunks()
        while r - l > eta:
            if env.remaining == 0:
                return BiasInterval(l, r), base, False
            K = next(gen)
            # endpoints after each further acceptance, by repeated addition
            if tag == LOWER:
                ends = np.cumsum(np.r_[l, np.full(K, eta)])
                alive = r - ends[:-1] > eta
            else:
                ends = np.cumsum(np.r_[r, np.full(K, -eta)])
                alive = ends[:-1] - l > eta
            K = int(np.argmin(alive)) if not alive.all() else K
            ms = ends[1:K + 1]
            base = _prune(base, lambda _t: float(ms[-1]), inst, env)
            if not base.informative_ids:  # nothing left to probe on this interval
                return BiasInterval(l, r), base, True
            watch = base.informative_ids
            res = env.scan(probe_batch(base, ms, inst), watch)
            steps = res.accepted
            if tag == LOWER:
                l = float(ends[steps])
            else:
                r = float(ends[steps])
            if res.truncated:
                return BiasInterval(l, r), base, False
            if res.rejected:
                if tag == LOWER:
                    J_new = BiasInterval(l, float(ends[steps + 1]))
                else:
                    J_new = BiasInterval(float(ends[steps + 1]), r)
                return J_new, base, True
        return BiasInterval(l, r), base, True
    # mixed tags: probe one scheme at a time
    while r - l > eta:
        if env.remaining == 0:
            return BiasInterval(l, r), base, False
        base = _prune(base, lambda t: l + eta if t == LOWER else r - eta, inst, env)
        if not base.informative_ids:
            return BiasInterval(l, r), base, True
        watch = base.informative_ids
        pr = build_probe(base, l, r, eta, inst)
        res = env.play_until(pr.scheme, watch)
        if not res.fired:
            return BiasInterval(l, r), base, False
        i = res.atom
        _, m, tag = pr.probes[i]
        accept = res.action == base.atoms[i][1].action
        if tag == LOWER:
            if not accept:
                return BiasInterval(l, m), base, True
            l = m
        else:
            if not accept:
                return BiasInterval(m, r), base, True
            r = m
    return BiasInterval(l, r), base, True


def run_gse(T: int, inst: Instance, env):
    """General Safe Exploration: localize, explore in phases, then commit.

    Returns:
        The environment's trace.
    """
    a0 = default_action(inst)
    loc = localize(inst, env, T)
    if loc.infeasible:
        env.commit(Scheme.single(inst.prior, a0))
        env.trace.flags["committed_interval"] = None
        return env.trace
    J = loc.interval
    env.note_phase(J)
    while J.length > 1.0 / T and env.remaining > 0:
        J_new, base, completed = safe_explore(J, inst, env)
        if not completed:  # horizon ran out mid-phase
            J = J_new
            break
        if J_new == J:
            env.note_flag("early_stop", True)
            break
        J = J_new
        env.note_interval(J)
        env.note_phase(J)
    committed = vertex_safe_scheme(J, inst)
    env.trace.flags["committed_interval"] = (J.lo, J.hi)
    env.commit(committed.scheme)
    return env.trace
