"""Dense two-phase primal simplex returning basic feasible (vertex) solutions.

Problems in this package are tiny (at most a few dozen variables), so the
solver keeps a full dense tableau. Pricing is Dantzig's rule with
lowest-index ties, switching to Bland's rule after 2*(rows+cols) pivots to
rule out cycling on degenerate polytopes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure

TOL_LP = 1e-9
TOL_PIVOT = 1e-11
TOL_COST = 1e-10
TOL_ACTIVE = 1e-8

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"


@dataclass
class LinearProgram:
    """max/min c.x subject to A_eq x = b_eq, A_ge x >= b_ge, A_le x <= b_le, bounds.

    ``bounds`` is a list of (lo, hi) pairs with +-inf allowed; the default is
    x >= 0 for every variable.
    """

    c: np.ndarray
    sense: str = "max"
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ge: np.ndarray | None = None
    b_ge: np.ndarray | None = None
    A_le: np.ndarray | None = None
    b_le: np.ndarray | None = None
    bounds: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = len(self.c)
        for name in ("eq", "ge", "le"):
            A = getattr(self, "A_" + name)
            b = getattr(self, "b_" + name)
            if A is None:
                A, b = np.zeros((0, n)), np.zeros(0)
            b = np.asarray(b, dtype=float).ravel()
            A = np.atleast_2d(np.asarray(A, dtype=float))
            if A.size == 0:
                A = A.reshape(len(b) if n == 0 else 0, n)
            if A.shape[1] != n or A.shape[0] != len(b):
                raise ValueError(f"A_{name} shape {A.shape} inconsistent with {n} vars, {len(b)} rhs")
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
                raise ValueError(f"non-finite coefficients in A_{name}/b_{name}")
            setattr(self, "A_" + name, A)
            setattr(self, "b_" + name, b)
        if self.bounds is None:
            self.bounds = [(0.0, np.inf)] * n
        if len(self.bounds) != n:
            raise ValueError("bounds length must match number of variables")
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")

    @property
    def n_vars(self) -> int:
        return len(self.c)


@dataclass(frozen=True)
class LpSolution:
    status: str
    point: np.ndarray | None = None
    objective_value: float = float("nan")
    basis: frozenset = field(default_factory=frozenset)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Row-reduced tableau [A | b] with basis bookkeeping and a cost row."""

    def __init__(self, A, b, basis):
        self.T = np.hstack([A, b[:, None]])
        self.basis = list(basis)
        self.pivots = 0

    def pivot(self, r, c):
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.cost -= self.cost[c] * T[r]
        self.basis[r] = c
        self.pivots += 1

    def set_cost(self, c):
        # reduced cost row d = c - c_B B^-1 A, last entry = -objective
        full = np.append(c, 0.0)
        cb = full[self.basis]
        self.cost = full - cb @ self.T

    def run(self, n_cols, cap, bland_after):
        """Minimize the current cost over columns [0, n_cols). Returns False if unbounded."""
        T = self.T
        m = T.shape[0]
        while True:
            d = self.cost[:n_cols]
            if self.pivots >= bland_after:
                cand = np.flatnonzero(d < -TOL_COST)
                if cand.size == 0:
                    return True
                c = int(cand[0])
            else:
                c = int(np.argmin(d))
                if d[c] >= -TOL_COST:
                    return True
            col = T[:, c]
            pos = col > TOL_PIVOT
            if not np.any(pos):
                return False
            ratios = np.full(m, np.inf)
            ratios[pos] = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, c)
            if self.pivots > cap:
                raise NumericalFailure(f"simplex exceeded {cap} pivots")


def _standard_form(lp: LinearProgram):
    """Rewrite lp as min c'y s.t. A y = b, y >= 0 together with the back-map x = D y + x0."""
    n = lp.n_vars
    cols = []  # each: (var index, sign)
    x0 = np.zeros(n)
    ub_rows = []  # (column index in y, capacity)
    for j, (lo, hi) in enumerate(lp.bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            return None
        if np.isfinite(lo):
            x0[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            x0[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    D = np.zeros((n, ny))
    for k, (j, s) in enumerate(cols):
        D[j, k] = s
    blocks_A, blocks_b, slack_sign = [], [], []
    if lp.A_eq.shape[0]:
        blocks_A.append(lp.A_eq @ D)
        blocks_b.append(lp.b_eq - lp.A_eq @ x0)
        slack_sign += [0.0] * lp.A_eq.shape[0]
    if lp.A_ge.shape[0]:
        blocks_A.append(lp.A_ge @ D)
        blocks_b.append(lp.b_ge - lp.A_ge @ x0)
        slack_sign += [-1.0] * lp.A_ge.shape[0]
    if lp.A_le.shape[0]:
        blocks_A.append(lp.A_le @ D)
        blocks_b.append(lp.b_le - lp.A_le @ x0)
        slack_sign += [1.0] * lp.A_le.shape[0]
    for k, cap in ub_rows:
        row = np.zeros(ny)
        row[k] = 1.0
        blocks_A.append(row[None])
        blocks_b.append(np.array([cap]))
        slack_sign.append(1.0)
    m = len(slack_sign)
    A = np.vstack(blocks_A) if blocks_A else np.zeros((0, ny))
    b = np.concatenate(blocks_b) if blocks_b else np.zeros(0)
    slack_rows = [i for i in range(m) if slack_sign[i] != 0.0]
    S = np.zeros((m, len(slack_rows)))
    for k, i in enumerate(slack_rows):
        S[i, k] = slack_sign[i]
    A = np.hstack([A, S])
    cy = np.concatenate([D.T @ lp.c, np.zeros(len(slack_rows))])
    if lp.sense == "max":
        cy = -cy
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    # rows whose slack now has coefficient +1 can start with that slack basic
    start = [None] * m
    for k, i in enumerate(slack_rows):
        if A[i, ny + k] > 0:
            start[i] = ny + k
    return A, b, cy, D, x0, start


def solve(lp: LinearProgram) -> LpSolution:
    """Solve ``lp`` and return a basic optimal solution, or Infeasible/Unbounded.

    Raises:
        NumericalFailure: pivot budget exhausted or the final point fails the
            residual check.
    """
    sf = _standard_form(lp)
    if sf is None:
        return LpSolution(INFEASIBLE)
    A, b, cy, D, x0, start = sf
    m, N = A.shape
    scale = max(1.0, float(np.abs(b).max()) if m else 1.0)
    if m == 0:
        if np.any(cy < -TOL_COST):
            return LpSolution(UNBOUNDED)
        return _finish(lp, np.zeros(N), D, x0, 0)

    art_rows = [i for i in range(m) if start[i] is None]
    n_art = len(art_rows)
    Aext = np.hstack([A, np.zeros((m, n_art))])
    basis = list(start)
    for k, i in enumerate(art_rows):
        Aext[i, N + k] = 1.0
        basis[i] = N + k
    tab = _Tableau(Aext, b.copy(), basis)
    cap = max(1000, 50 * (m + N + n_art))
    bland_after = 2 * (m + N + n_art)

    if n_art:
        c1 = np.concatenate([np.zeros(N), np.ones(n_art)])
        tab.set_cost(c1)
        tab.run(N + n_art, cap, bland_after)
        if -tab.cost[-1] > TOL_LP * scale:
            return LpSolution(INFEASIBLE, iterations=tab.pivots)
        # drive artificials out of the basis; drop redundant rows
        r = 0
        while r < tab.T.shape[0]:
            if tab.basis[r] >= N:
                row = tab.T[r, :N]
                j = int(np.argmax(np.abs(row)))
                if abs(row[j]) > 1e-9:
                    tab.pivot(r, j)
                else:
                    tab.T = np.delete(tab.T, r, axis=0)
                    del tab.basis[r]
                    continue
            r += 1
        tab.T = np.delete(tab.T, np.s_[N:N + n_art], axis=1)
    tab.set_cost(cy)
    bounded = tab.run(N, cap, bland_after)
    if not bounded:
        return LpSolution(UNBOUNDED, iterations=tab.pivots)

    y = np.zeros(N)
    y[tab.basis] = tab.T[:, -1]
    y = _polish(A, b, tab.basis, y)
    return _finish(lp, y, D, x0, tab.pivots)


def _polish(A, b, basis, y):
    """Recompute basic values from the original system to shed pivot round-off."""
    if not basis:
        return y
    B = A[:, basis]
    try:
        if B.shape[0] == B.shape[1]:
            yb = np.linalg.solve(B, b)
        else:
            yb = np.linalg.lstsq(B, b, rcond=None)[0]
    except np.linalg.LinAlgError:
        return y
    if np.all(np.isfinite(yb)) and np.all(yb >= -1e-9) and np.abs(B @ yb - b).max() <= np.abs(
        B @ y[basis] - b
    ).max() + 1e-12:
        y = y.copy()
        y[basis] = np.maximum(yb, 0.0)
    return y


def _finish(lp: LinearProgram, y, D, x0, iters) -> LpSolution:
    x = D @ y[: D.shape[1]] + x0
    scale = 1.0 + max(
        [np.abs(M).max() if M.size else 0.0 for M in (lp.A_eq, lp.A_ge, lp.A_le)]
    ) * max(1.0, np.abs(x).max())
    tol = 10 * TOL_LP * scale
    act = set()
    for i, (row, rhs) in enumerate(zip(lp.A_eq, lp.b_eq)):
        if abs(row @ x - rhs) > tol:
            raise NumericalFailure(f"equality row {i} violated by {abs(row @ x - rhs):.2e}")
        act.add(("eq", i))
    for i, (row, rhs) in enumerate(zip(lp.A_ge, lp.b_ge)):
        g = row @ x - rhs
        if g < -tol:
            raise NumericalFailure(f"ge row {i} violated by {-g:.2e}")
        if abs(g) <= TOL_ACTIVE * scale:
            act.add(("ge", i))
    for i, (row, rhs) in enumerate(zip(lp.A_le, lp.b_le)):
        g = rhs - row @ x
        if g < -tol:
            raise NumericalFailure(f"le row {i} violated by {-g:.2e}")
        if abs(g) <= TOL_ACTIVE * scale:
            act.add(("le", i))
    for j, (lo, hi) in enumerate(lp.bounds):
        if lo is not None and np.isfinite(lo) and abs(x[j] - lo) <= TOL_ACTIVE * scale:
            act.add(("lb", j))
        if hi is not None and np.isfinite(hi) and abs(x[j] - hi) <= TOL_ACTIVE * scale:
            act.add(("ub", j))
    return LpSolution(OPTIMAL, x, float(lp.c @ x), frozenset(act), iters)


def feasibility(lp: LinearProgram) -> LpSolution:
    """Find any basic feasible point of ``lp`` (its objective is ignored)."""
    z = LinearProgram(
        np.zeros(lp.n_vars), "min", lp.A_eq, lp.b_eq, lp.A_ge, lp.b_ge, lp.A_le, lp.b_le, lp.bounds
    )
    return solve(z)
