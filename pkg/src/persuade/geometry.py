"""Action regions in posterior space, interval-safe regions and their polytope tools.

A Bayesian posterior nu weakly induces action a at bias alpha iff for every
other action a',

    du(a, a') . nu >= b(alpha),   b(alpha) = ((alpha - 1) / alpha) * du(a, a') . mu0,

where du(a, a') = u_R(a, .) - u_R(a', .). Over an interval J the safe
right-hand side is the larger of the two endpoint values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from . import lp as lpmod
from .errors import InfeasibleProjection, NotInRegion, NumericalFailure, RepairOutOfSimplex
from .receiver import TOL_TIE, default_action
from .types import TOL_BAYES, BiasInterval, Instance, Scheme, SchemeBatch

TOL_STRICT = 1e-7
TOL_ACTIVE = 1e-8
TOL_DEDUP = 1e-7
TOL_REGION = 1e-9

LOWER = "Lower"
UPPER = "Upper"


# ---------------------------------------------------------------------------
# constraints and right-hand sides


@dataclass(frozen=True, eq=False)
class IcConstraint:
    """Weak IC constraint du . nu >= b between ``winner`` and ``loser``."""

    winner: int
    loser: int
    normal: np.ndarray
    c_coeff: float

    @property
    def movable(self) -> bool:
        return abs(self.c_coeff) > TOL_TIE

    def rhs(self, alpha: float) -> float:
        return (alpha - 1.0) / alpha * self.c_coeff

    def interval_rhs(self, J) -> float:
        lo, hi = J
        return max(self.rhs(lo), self.rhs(hi))

    @property
    def binding_tag(self) -> str | None:
        """Endpoint that determines the interval RHS: Upper if du.mu0 > 0, Lower if < 0."""
        if not self.movable:
            return None
        return UPPER if self.c_coeff > 0 else LOWER


def ic_constraint(a: int, a_prime: int, inst: Instance) -> IcConstraint:
    du = inst.u_receiver[a] - inst.u_receiver[a_prime]
    du.setflags(write=False)
    return IcConstraint(a, a_prime, du, float(du @ inst.prior))


def ic_constraints(a: int, inst: Instance) -> tuple:
    return tuple(ic_constraint(a, b, inst) for b in range(inst.n_actions) if b != a)


def rhs(a: int, a_prime: int, alpha: float, inst: Instance) -> float:
    """Pointwise right-hand side ((alpha-1)/alpha) * du(a,a') . mu0."""
    return ic_constraint(a, a_prime, inst).rhs(alpha)


def interval_rhs(a: int, a_prime: int, J, inst: Instance) -> float:
    """Interval-safe right-hand side: max of the endpoint values over J."""
    return ic_constraint(a, a_prime, inst).interval_rhs(J)


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True, eq=False)
class SafeRegion:
    """R_a^J = {nu in simplex : du(a,a') . nu >= b_{a,a'}(J) for all a' != a}.

    Constraint ids 0..m-1 are the IC rows (in ``constraints`` order) and
    m..m+n-1 the simplex faces nu(w) >= 0.
    """

    action: int
    interval: BiasInterval
    constraints: tuple
    A: np.ndarray
    b: np.ndarray
    inst: Instance = field(repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def slack(self, nu) -> np.ndarray:
        return self.A @ np.asarray(nu, dtype=float) - self.b

    def contains(self, nu, tol: float = TOL_REGION) -> bool:
        nu = np.asarray(nu, dtype=float)
        if abs(nu.sum() - 1.0) > tol or np.any(nu < -tol):
            return False
        return bool(np.all(self.slack(nu) >= -tol))

    def binding(self, v, tol: float = TOL_ACTIVE) -> frozenset:
        v = np.asarray(v, dtype=float)
        ic = np.flatnonzero(np.abs(self.slack(v)) <= tol)
        faces = self.m + np.flatnonzero(v <= tol)
        return frozenset(int(i) for i in np.concatenate([ic, faces]))

    def maximize(self, c) -> np.ndarray:
        """A vertex of the region maximizing c . x (basic optimal solution)."""
        n = self.n
        sol = lpmod.solve(lpmod.LinearProgram(
            np.asarray(c, dtype=float), "max", A_eq=np.ones((1, n)), b_eq=[1.0],
            A_ge=self.A, b_ge=self.b))
        if not sol.optimal:
            raise NotInRegion(f"region for action {self.action} is empty ({sol.status})")
        return sol.point


def safe_region(a: int, J, inst: Instance) -> SafeRegion:
    """Interval-safe region of action ``a`` on J = [lo, hi]."""
    J = J if isinstance(J, BiasInterval) else BiasInterval(*J)
    return _safe_region(a, J.lo, J.hi, inst)


@lru_cache(maxsize=4096)
def _safe_region(a, lo, hi, inst):
    cons = ic_constraints(a, inst)
    A = np.array([c.normal for c in cons])
    b = np.array([c.interval_rhs((lo, hi)) for c in cons])
    A.setflags(write=False)
    b.setflags(write=False)
    return SafeRegion(a, BiasInterval(lo, hi), cons, A, b, inst)


def pointwise_region(a: int, alpha: float, inst: Instance) -> SafeRegion:
    return safe_region(a, (alpha, alpha), inst)


def max_slack(a: int, J, inst: Instance) -> float:
    """max s such that du(a,a') . nu >= b(J) + s for all a' and some nu in the simplex."""
    reg = safe_region(a, J, inst)
    n, m = reg.n, reg.m
    A_ge = np.hstack([reg.A, -np.ones((m, 1))])
    sol = lpmod.solve(lpmod.LinearProgram(
        np.r_[np.zeros(n), 1.0], "max", A_eq=np.r_[np.ones(n), 0.0][None], b_eq=[1.0],
        A_ge=A_ge, b_ge=reg.b, bounds=[(0.0, np.inf)] * n + [(-np.inf, np.inf)]))
    return float(sol.objective_value)


def strict_interior_feasible(a: int, J, inst: Instance) -> bool:
    """True iff the IC-strict interior of R_a^J is nonempty (max slack > TOL_STRICT)."""
    J = J if isinstance(J, BiasInterval) else BiasInterval(*J)
    return _strict(a, J.lo, J.hi, inst)


@lru_cache(maxsize=8192)
def _strict(a, lo, hi, inst):
    return max_slack(a, (lo, hi), inst) > TOL_STRICT


def relevant_actions(J, inst: Instance) -> tuple:
    """Actions whose interval-safe region has a nonempty IC-strict interior."""
    return tuple(a for a in range(inst.n_actions) if strict_interior_feasible(a, J, inst))


def delta_mu0(inst: Instance) -> float:
    """Distance from the prior to the boundary of the smallest default region.

    The default region is the alpha = 1 region of a0 (it only grows as alpha
    decreases). Distances are measured inside the simplex's affine hull, so
    each hyperplane normal is first projected onto {x : 1.x = 0}; a face
    nu(w) = 0 is at distance mu0(w) / sqrt(1 - 1/n).

    Raises:
        NonUniqueDefault: if the instance has no unique default action.
    """
    a0 = default_action(inst)
    n = inst.n_states
    dists = list(inst.prior / np.sqrt(1.0 - 1.0 / n))
    for c in ic_constraints(a0, inst):
        g = c.normal - c.normal.mean()
        gn = np.linalg.norm(g)
        if gn > 1e-14:  # constant normals never bind inside the simplex
            dists.append(abs(c.normal @ inst.prior) / gn)
    return float(min(dists))


# ---------------------------------------------------------------------------
# vertex decomposition


@dataclass(frozen=True, eq=False)
class VertexAtom:
    """A vertex of a safe region with its action and binding constraint ids.

    ``movable_binding`` is (constraint id, tag) once chosen, with tag Lower
    or Upper naming the interval endpoint that sets that constraint.
    """

    vertex: np.ndarray
    action: int
    binding: frozenset
    movable_binding: tuple | None = None


def _generic_direction(n: int) -> np.ndarray:
    # fractional parts of multiples of the golden ratio: deterministic and generic
    return np.modf(np.arange(1, n + 1) * 0.6180339887498949)[0] + 0.1


def _membership(V: np.ndarray, nu: np.ndarray):
    """min ||V^T lam - nu||_1 over the unit simplex in lam; returns (residual, lam)."""
    k, n = V.shape
    A_eq = np.vstack([
        np.hstack([V.T, np.eye(n), -np.eye(n)]),
        np.r_[np.ones(k), np.zeros(2 * n)][None],
    ])
    sol = lpmod.solve(lpmod.LinearProgram(
        np.r_[np.zeros(k), np.ones(2 * n)], "min", A_eq=A_eq, b_eq=np.r_[nu, 1.0]))
    return sol.objective_value, sol.point[:k]


def _separation(V: np.ndarray, nu: np.ndarray):
    k, n = V.shape
    A_ge = np.hstack([-V, np.ones((k, 1))])  # gamma - c.v_j >= 0
    sol = lpmod.solve(lpmod.LinearProgram(
        np.r_[nu, -1.0], "max", A_ge=A_ge, b_ge=np.zeros(k),
        bounds=[(-1.0, 1.0)] * n + [(-np.inf, np.inf)]))
    return sol.objective_value, sol.point[:n]


def _polish_weights(V, nu, lam):
    S = np.flatnonzero(lam > 1e-13)
    M = np.vstack([V[S].T, np.ones(len(S))])
    sol, *_ = np.linalg.lstsq(M, np.r_[nu, 1.0], rcond=None)
    out = np.zeros_like(lam)
    if np.all(sol >= 0) and np.abs(M @ sol - np.r_[nu, 1.0]).max() <= np.abs(M @ lam[S] - np.r_[nu, 1.0]).max():
        out[S] = sol
    else:
        out[S] = lam[S]
    return out


def _caratheodory(V, lam, max_atoms):
    """Drop vertices until at most ``max_atoms`` carry weight, keeping V^T lam fixed."""
    lam = lam.copy()
    while True:
        S = np.flatnonzero(lam > 0)
        if len(S) <= max_atoms:
            return lam
        M = np.vstack([V[S].T, np.ones(len(S))])
        z = np.linalg.svd(M)[2][-1]  # M z = 0 since len(S) > rank(M)
        if z.max() <= 0:
            z = -z
        pos = np.flatnonzero(z > 1e-14)
        ratios = lam[S[pos]] / z[pos]
        j = int(np.argmin(ratios))
        lam[S] = lam[S] - ratios[j] * z
        lam[S[pos[j]]] = 0.0
        lam[lam < 1e-15] = 0.0


def vertex_decompose(nu, region: SafeRegion) -> list:
    """Write ``nu`` as a convex combination of at most n vertices of ``region``.

    Uses an initialization LP (generic direction), then alternates a
    restricted membership LP, a separation LP and a pricing LP until the
    current vertex set's hull contains nu.

    Returns:
        List of (weight, VertexAtom).

    Raises:
        NotInRegion: if nu is not in the region within tolerance.
    """
    nu = np.asarray(nu, dtype=float)
    if not region.contains(nu, 1e-8):
        raise NotInRegion(f"posterior {nu.tolist()} is outside the region of action {region.action}")
    n = region.n
    V = [region.maximize(_generic_direction(n))]
    for _ in range(50 * (n + region.m) + 50):
        Vm = np.array(V)
        res, lam = _membership(Vm, nu)
        if res <= 1e-10:
            break
        gap, c = _separation(Vm, nu)
        if gap <= 1e-12:
            break  # nu is in the hull up to round-off
        v = region.maximize(c)
        if min(np.linalg.norm(v - u) for u in V) <= TOL_DEDUP:
            raise NumericalFailure("pricing LP returned a known vertex")
        V.append(v)
    else:
        raise NumericalFailure("vertex decomposition did not converge")
    Vm = np.array(V)
    lam = _polish_weights(Vm, nu, lam)
    lam = _caratheodory(Vm, lam, n)
    lam = _polish_weights(Vm, nu, lam)
    S = np.flatnonzero(lam > 0)
    lam = lam[S] / lam[S].sum()
    return [(float(w), VertexAtom(Vm[j], region.action, region.binding(Vm[j]))) for w, j in zip(lam, S)]


# ---------------------------------------------------------------------------
# Euclidean projection onto a modified region


def _modified_system(region: SafeRegion, pinned: int, new_rhs: float):
    """Equalities (simplex sum, pinned row) and inequalities (other rows, faces)."""
    n = region.n
    E = np.vstack([np.ones(n), region.A[pinned]])
    e = np.array([1.0, new_rhs])
    keep = [i for i in range(region.m) if i != pinned]
    G = np.vstack([region.A[keep], np.eye(n)])
    g = np.r_[region.b[keep], np.zeros(n)]
    return E, e, G, g


def _eqp(x, nu, Aw):
    """Step p minimizing ||x + p - nu|| with Aw p = 0."""
    d = nu - x
    if Aw.shape[0] == 0:
        return d
    _, s, Vt = np.linalg.svd(Aw)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    Z = Vt[rank:].T
    return Z @ (Z.T @ d)


def project_active_set(nu, region: SafeRegion, pinned: int, new_rhs: float):
    """Projection of ``nu`` onto the modified region; returns (point, active inequality ids).

    Primal active-set method for min ||x - nu||^2 started from a basic
    feasible point of the modified system.
    """
    nu = np.asarray(nu, dtype=float)
    E, e, G, g = _modified_system(region, pinned, new_rhs)
    n = region.n
    start = lpmod.feasibility(lpmod.LinearProgram(np.zeros(n), "min", A_eq=E, b_eq=e, A_ge=G, b_ge=g,
                                                   bounds=[(-np.inf, np.inf)] * n))
    if not start.optimal:
        raise InfeasibleProjection(f"modified region (rhs={new_rhs:.6g}) is empty")
    x = start.point
    W = []
    for i in np.flatnonzero(np.abs(G @ x - g) <= 1e-10):
        cand = np.vstack([E, G[W + [i]]])
        if np.linalg.matrix_rank(cand, tol=1e-10) == cand.shape[0]:
            W.append(int(i))
    for _ in range(500):
        Aw = np.vstack([E, G[W]]) if W else E
        p = _eqp(x, nu, Aw)
        if np.linalg.norm(p) <= 1e-13:
            lam, *_ = np.linalg.lstsq(Aw.T, x - nu, rcond=None)
            mu = lam[E.shape[0]:]
            if len(mu) == 0 or mu.min() >= -1e-12:
                return x, tuple(sorted(W))
            W.pop(int(np.argmin(mu)))
            continue
        Gp = G @ p
        step, block = 1.0, None
        for i in range(G.shape[0]):
            if i in W or Gp[i] >= -1e-14:
                continue
            t = (g[i] - G[i] @ x) / Gp[i]
            if t < step:
                step, block = max(t, 0.0), i
        x = x + step * p
        if block is not None:
            W.append(block)
    raise NumericalFailure("active-set projection did not converge")


def project_with_active(nu, region: SafeRegion, pinned: int, W: tuple, rhs_values):
    """KKT point for a fixed active set at several pinned RHS values.

    With the active set held fixed the projection and its multipliers are
    affine in the RHS, so this just solves the equality-constrained problem
    for every value and reports where primal feasibility and multiplier
    signs hold (there the point is the exact projection).

    Returns:
        (points K x n, ok mask of length K)
    """
    nu = np.asarray(nu, dtype=float)
    rhs_values = np.atleast_1d(np.asarray(rhs_values, dtype=float))
    E, e, G, g = _modified_system(region, pinned, 0.0)
    Aw = np.vstack([E, G[list(W)]]) if W else E
    bw = np.tile(np.r_[e, g[list(W)]], (len(rhs_values), 1))
    bw[:, 1] = rhs_values
    # x = nu + Aw^T lam with Aw Aw^T lam = bw - Aw nu
    K = Aw @ Aw.T
    lam = np.linalg.solve(K, (bw - Aw @ nu).T).T
    X = nu + lam @ Aw
    mu = lam[:, E.shape[0]:]
    prim = (X @ G.T - g).min(axis=1) if G.shape[0] else np.zeros(len(X))
    ok = (prim >= -1e-12) & ((mu.min(axis=1) >= -1e-12) if mu.shape[1] else True)
    return X, np.asarray(ok)


def project_to_modified_region(nu, region: SafeRegion, pinned: int, new_rhs: float) -> np.ndarray:
    """Closest point to ``nu`` in the region with pinned row set to equality at ``new_rhs``.

    Raises:
        InfeasibleProjection: if the modified constraint set is empty.
    """
    return project_active_set(nu, region, pinned, new_rhs)[0]


# ---------------------------------------------------------------------------
# Bayes-plausibility repair


def repair_constant(inst: Instance) -> float:
    """Utility-loss constant U_max (sqrt(n) + 4 / delta_mu0) of the repair step."""
    return inst.u_max * (np.sqrt(inst.n_states) + 4.0 / delta_mu0(inst))


def _repair_arrays(W, P, prior, delta, threshold=TOL_BAYES):
    P = np.clip(P, 0.0, None)
    P = P / P.sum(axis=-1, keepdims=True)
    W = W / W.sum(axis=-1, keepdims=True)
    r = prior - np.einsum("...k,...kn->...n", W, P)
    rn = np.linalg.norm(r, axis=-1)
    need = rn > threshold
    lam = np.where(need, 2.0 * rn / (delta + 2.0 * rn), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(need, (1.0 - lam) / np.where(need, lam, 1.0), 0.0)
    nu_plus = prior + coef[..., None] * r
    if np.any(nu_plus < -1e-12):
        raise RepairOutOfSimplex(f"correction posterior has entry {nu_plus.min():.3e}")
    nu_plus = np.clip(nu_plus, 0.0, None)
    nu_plus = nu_plus / nu_plus.sum(axis=-1, keepdims=True)
    W2 = np.concatenate([W * (1.0 - lam)[..., None], lam[..., None]], axis=-1)
    P2 = np.concatenate([P, nu_plus[..., None, :]], axis=-2)
    return W2, P2, need


def repair_bayes(perturbed, prior, default_region: SafeRegion, delta: float | None = None) -> Scheme:
    """Restore Bayes plausibility by adding one correction atom recommending a0.

    Args:
        perturbed: object with ``weights``, ``posteriors`` and ``actions``
            (a tuple of the three also works); need not be Bayes-plausible.
        prior: the prior mu0.
        default_region: a region of the default action a0.
        delta: delta_mu0 of the instance (computed if omitted).

    Returns:
        The input as a Scheme if its residual is within tolerance, otherwise a
        Scheme with weights scaled by (1 - lam) plus the correction atom.

    Raises:
        RepairOutOfSimplex: if the correction posterior leaves the simplex.
    """
    if isinstance(perturbed, tuple):
        W, P, acts = perturbed
    else:
        W, P, acts = perturbed.weights, perturbed.posteriors, perturbed.actions
    W = np.asarray(W, dtype=float)
    P = np.asarray(P, dtype=float)
    prior = np.asarray(prior, dtype=float)
    if delta is None:
        delta = delta_mu0(default_region.inst)
    W2, P2, need = _repair_arrays(W, P, prior, delta)
    if not need:
        return Scheme(W, P, tuple(acts), prior)
    return Scheme(W2, P2, tuple(acts) + (default_region.action,), prior, repaired=True)


def repair_bayes_batch(W, P, actions, prior, a0: int, delta: float) -> SchemeBatch:
    """Batched repair of every member with a nonzero residual.

    Members with an exactly zero residual get a zero-weight correction atom
    at the prior, so all members share one layout.
    """
    W2, P2, _ = _repair_arrays(np.asarray(W, float), np.asarray(P, float), np.asarray(prior, float), delta,
                               threshold=0.0)
    return SchemeBatch(W2, P2, tuple(actions) + (a0,), prior, repaired=True)


# ---------------------------------------------------------------------------
# misc helpers used by tests and the CLI


def region_vertices(region: SafeRegion, tol: float = 1e-9) -> np.ndarray:
    """All vertices of a (small) region by basis enumeration; for reporting only."""
    n, m = region.n, region.m
    rows = np.vstack([region.A, np.eye(n)])
    rhs_ = np.r_[region.b, np.zeros(n)]
    out = []
    for S in combinations(range(m + n), n - 1):
        M = np.vstack([np.ones(n), rows[list(S)]])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, np.r_[1.0, rhs_[list(S)]])
        if region.contains(v, tol) and all(np.linalg.norm(v - u) > TOL_DEDUP for u in out):
            out.append(v)
    return np.array(out).reshape(-1, n)
