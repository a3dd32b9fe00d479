"""Brute-force reference implementations for cross-checking the library.

Everything here is written from the model definitions directly, with plain
loops, enumeration and scipy's HiGHS LP solver. Nothing is imported from the
modules being checked apart from the core types.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from .types import BinaryInstance, Instance

TIE = 1e-9


def brute_best_response(nu, alpha: float, inst: Instance, allowed=None) -> int:
    """Best response by explicit loops with the two-level tie-break."""
    nu = [float(x) for x in np.asarray(getattr(nu, "probs", nu))]
    mu = [float(x) for x in inst.prior]
    n, k = len(mu), inst.n_actions
    hat = [(1.0 - alpha) * mu[w] + alpha * nu[w] for w in range(n)]
    acts = list(range(k)) if allowed is None else sorted(int(a) for a in allowed)
    ur = {a: sum(hat[w] * inst.u_receiver[a][w] for w in range(n)) for a in acts}
    best = max(ur.values())
    cands = [a for a in acts if ur[a] >= best - TIE]
    us = {a: sum(nu[w] * inst.u_sender[a][w] for w in range(n)) for a in cands}
    top = max(us.values())
    for a in cands:  # ascending order, so the first hit is the lowest index
        if us[a] >= top - TIE:
            return a
    raise AssertionError("unreachable")


def brute_relevant_actions(alpha: float, inst: Instance, tol: float = 1e-7) -> tuple:
    """Actions that are the strict best response at some belief under bias alpha.

    For each a, maximize s subject to hat(nu) . (u_R(a) - u_R(b)) >= s for
    all b != a over the simplex; a is relevant iff the optimum exceeds tol.
    """
    n, k = inst.n_states, inst.n_actions
    out = []
    for a in range(k):
        # variables (nu_1..nu_n, s); minimize -s
        c = np.r_[np.zeros(n), -1.0]
        rows, rhs = [], []
        for b in range(k):
            if b == a:
                continue
            du = inst.u_receiver[a] - inst.u_receiver[b]
            # alpha du.nu + (1-alpha) du.mu >= s  ->  -alpha du.nu + s <= (1-alpha) du.mu
            rows.append(np.r_[-alpha * du, 1.0])
            rhs.append((1.0 - alpha) * float(du @ inst.prior))
        res = linprog(c, A_ub=np.array(rows), b_ub=rhs, A_eq=np.r_[np.ones(n), 0.0][None], b_eq=[1.0],
                      bounds=[(0, None)] * n + [(None, 10.0)], method="highs")
        if res.status == 0 and -res.fun > tol:
            out.append(a)
    return tuple(out)


def brute_opt_binary(b: BinaryInstance, alpha_star: float, grid_step: float = 1e-4) -> float:
    """Best two-point scheme {0, nu} over a grid of nu in [q_hat, 1]."""
    if grid_step > 1e-4:
        raise ValueError("grid_step must be <= 1e-4")
    nu_star = b.mu0 + (b.q_hat - b.mu0) / alpha_star
    best = 0.0
    n_pts = int(round((1.0 - b.q_hat) / grid_step))
    for i in range(n_pts + 1):
        nu = min(1.0, b.q_hat + i * grid_step)
        if nu >= nu_star - 1e-12:
            best = max(best, b.mu0 / nu)
    return best


def _opt_lp(inst: Instance, alpha: float, allowed) -> float:
    """Direct-recommendation LP in joint form pi(a, w) >= 0 with sum_a pi(a, w) = mu0(w)."""
    n, k = inst.n_states, inst.n_actions
    mu = inst.prior
    nv = k * n
    c = -inst.u_sender.reshape(-1)
    A_ub, b_ub = [], []
    for a in range(k):
        for b in range(k):
            if b == a or a not in allowed:
                continue
            du = inst.u_receiver[a] - inst.u_receiver[b]
            row = np.zeros(nv)
            # alpha pi(a,.) . du + (1 - alpha) lambda_a (mu . du) >= 0, lambda_a = sum_w pi(a, w)
            row[a * n:(a + 1) * n] = -(alpha * du + (1.0 - alpha) * float(mu @ du))
            A_ub.append(row)
            b_ub.append(0.0)
    A_eq = np.zeros((n, nv))
    for w in range(n):
        for a in range(k):
            A_eq[w, a * n + w] = 1.0
    bounds = [(0, None) if a in allowed else (0, 0) for a in range(k) for _ in range(n)]
    res = linprog(c, A_ub=np.array(A_ub).reshape(-1, nv) if A_ub else None, b_ub=b_ub or None,
                  A_eq=A_eq, b_eq=mu, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"oracle LP failed: {res.message}")
    return float(-res.fun)


def simplex_grid(n: int, step: float) -> np.ndarray:
    """All points of the probability simplex with coordinates on a grid of ``step``."""
    N = int(round(1.0 / step))
    pts = []
    for comp in itertools.product(range(N + 1), repeat=n - 1):
        s = sum(comp)
        if s <= N:
            pts.append(list(comp) + [N - s])
    return np.array(pts, dtype=float) / N


def brute_concavify(inst: Instance, alpha: float, step: float = 0.01, allowed=None) -> float:
    """Concavification of the reduced-form sender value over a simplex grid of posteriors.

    Solves max sum_j lam_j V(nu_j) subject to sum_j lam_j nu_j = mu0, lam >= 0,
    where V(nu) is the sender's expected utility at the receiver's response.
    """
    if allowed is None:
        allowed = brute_relevant_actions(alpha, inst)
    P = simplex_grid(inst.n_states, step)
    V = np.empty(len(P))
    for j, nu in enumerate(P):
        a = brute_best_response(nu, alpha, inst, allowed)
        V[j] = float(inst.u_sender[a] @ nu)
    res = linprog(-V, A_eq=P.T, b_eq=inst.prior, bounds=[(0, None)] * len(P), method="highs")
    if res.status != 0:
        raise RuntimeError(f"concavification LP failed: {res.message}")
    return float(-res.fun)


def brute_opt_general(inst: Instance, alpha_star: float, cross_check: bool = False, step: float = 0.01):
    """Optimal one-round value against a receiver with known bias ``alpha_star``.

    Args:
        inst: the instance.
        alpha_star: the bias.
        cross_check: also run the grid concavification and assert agreement
            within 2 * step * U_max (only for at most 4 states).
        step: grid resolution for the cross check.

    Returns:
        The LP value (and the grid value as a second element when cross-checking).
    """
    allowed = brute_relevant_actions(alpha_star, inst)
    val = _opt_lp(inst, alpha_star, allowed)
    if not cross_check:
        return val
    if inst.n_states > 4:
        raise ValueError("grid cross-check is limited to 4 states")
    grid = brute_concavify(inst, alpha_star, step, allowed)
    bound = 2.0 * step * float(np.max(np.abs(inst.u_sender)))
    if abs(val - grid) > bound + 1e-9:
        raise AssertionError(f"LP {val:.6f} vs grid {grid:.6f} differ by more than {bound:.3g}")
    return val, grid


def _region_system(region):
    """Inequalities G nu >= h of an interval-safe region, rebuilt from the instance."""
    inst, a = region.inst, region.action
    lo, hi = region.interval.lo, region.interval.hi
    n = inst.n_states
    G, h = [], []
    for b in range(inst.n_actions):
        if b == a:
            continue
        du = inst.u_receiver[a] - inst.u_receiver[b]
        c = float(du @ inst.prior)
        G.append(du)
        h.append(max((lo - 1.0) / lo * c, (hi - 1.0) / hi * c))
    for w in range(n):
        e = np.zeros(n)
        e[w] = 1.0
        G.append(e)
        h.append(0.0)
    return np.array(G), np.array(h)


def brute_vertex_enum(region, tol: float = 1e-9, dedup: float = 1e-7) -> np.ndarray:
    """Vertices of a region by solving every (n-1)-subset of its constraints as equalities."""
    G, h = _region_system(region)
    n = G.shape[1]
    verts = []
    for S in itertools.combinations(range(len(G)), n - 1):
        M = np.vstack([G[list(S)], np.ones(n)])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, np.r_[h[list(S)], 1.0])
        if np.all(G @ x >= h - tol) and not any(np.linalg.norm(x - v) < dedup for v in verts):
            verts.append(x)
    return np.array(verts).reshape(-1, n)


def brute_lp(c, G, h, E=None, f=None, tol: float = 1e-9):
    """Maximize c.x subject to G x <= h and E x = f by vertex enumeration.

    Assumes the feasible set is a nonempty polytope (bounded). Returns
    (value, x) or None when no vertex is feasible.
    """
    c = np.asarray(c, float)
    G = np.asarray(G, float).reshape(-1, len(c))
    h = np.asarray(h, float)
    N = len(c)
    E = np.zeros((0, N)) if E is None else np.asarray(E, float).reshape(-1, N)
    f = np.zeros(0) if f is None else np.asarray(f, float)
    need = N - E.shape[0]
    best = None
    for S in itertools.combinations(range(len(G)), need):
        M = np.vstack([E, G[list(S)]])
        if np.linalg.matrix_rank(M) < N:
            continue
        x = np.linalg.solve(M, np.r_[f, h[list(S)]])
        if np.all(G @ x <= h + tol) and np.allclose(E @ x, f, atol=tol):
            v = float(c @ x)
            if best is None or v > best[0]:
                best = (v, x)
    return best


def brute_projection(nu, G, h, E, f, tol: float = 1e-9):
    """Euclidean projection of nu onto {G x >= h, E x = f} by active-set enumeration.

    Each subset S of inequalities is treated as equalities; the projection onto
    that affine set is kept when it is feasible. The nearest kept point is the
    projection.
    """
    nu = np.asarray(nu, float)
    G = np.asarray(G, float)
    h = np.asarray(h, float)
    E = np.asarray(E, float).reshape(-1, len(nu))
    f = np.asarray(f, float)
    best = None
    for r in range(len(G) + 1):
        for S in itertools.combinations(range(len(G)), r):
            A = np.vstack([E, G[list(S)]])
            b = np.r_[f, h[list(S)]]
            # x = nu - A^T y with A A^T y = A nu - b (least squares for rank deficiency)
            y = np.linalg.lstsq(A @ A.T, A @ nu - b, rcond=None)[0]
            x = nu - A.T @ y
            if np.abs(A @ x - b).max() > 1e-9 or np.any(G @ x < h - tol):
                continue
            d = float(np.linalg.norm(x - nu))
            if best is None or d < best[0] - 1e-14:
                best = (d, x)
    return None if best is None else best[1]
