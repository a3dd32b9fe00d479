import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from persuade import lp
from persuade.oracle import brute_lp


def test_single_bound():
    sol = lp.solve(lp.LinearProgram([1.0], "max", bounds=[(0, 1)]))
    assert sol.optimal
    assert sol.point[0] == pytest.approx(1.0) and sol.objective_value == pytest.approx(1.0)


def test_triangle_vertex():
    sol = lp.solve(lp.LinearProgram([1.0, 1.0], "max", A_le=[[1.0, 1.0]], b_le=[1.0]))
    assert sol.objective_value == pytest.approx(1.0)
    # a basic solution sits at one of the triangle's vertices
    assert any(np.allclose(sol.point, v) for v in ([1, 0], [0, 1]))
    ref = brute_lp([1, 1], [[1, 1], [-1, 0], [0, -1]], [1, 0, 0])
    assert ref[0] == pytest.approx(sol.objective_value)


def test_infeasible_bounds():
    sol = lp.solve(lp.LinearProgram([1.0], "max", A_ge=[[1.0]], b_ge=[2.0], bounds=[(None, 1.0)]))
    assert sol.status == lp.INFEASIBLE


def test_unbounded():
    sol = lp.solve(lp.LinearProgram([1.0, 0.0], "max", A_le=[[0.0, 1.0]], b_le=[1.0]))
    assert sol.status == lp.UNBOUNDED


def test_free_variables_and_min():
    # min |x - 0.3| style: min t s.t. t >= x - 0.3, t >= 0.3 - x, x free, x = 0.7
    sol = lp.solve(lp.LinearProgram([0.0, 1.0], "min", A_eq=[[1.0, 0.0]], b_eq=[0.7],
                                    A_ge=[[-1.0, 1.0], [1.0, 1.0]], b_ge=[-0.3, 0.3],
                                    bounds=[(None, None), (None, None)]))
    assert sol.objective_value == pytest.approx(0.4)


def test_membership_examples():
    def member(V, nu):
        V = np.asarray(V, float).reshape(-1, len(nu))
        return lp.feasibility(lp.LinearProgram(np.zeros(len(V)), A_eq=np.vstack([V.T, np.ones(len(V))]),
                                               b_eq=np.r_[nu, 1.0]))

    s = member([[1, 0], [0, 1]], [0.5, 0.5])
    assert s.optimal and np.allclose(s.point, [0.5, 0.5])
    assert member([[0.5, 0.5], [0, 1]], [0.9, 0.1]).status == lp.INFEASIBLE
    assert member([], [0.3, 0.7]).status == lp.INFEASIBLE


def test_shape_errors():
    with pytest.raises(ValueError):
        lp.LinearProgram([1.0, 2.0], A_eq=[[1.0]], b_eq=[1.0])
    with pytest.raises(ValueError):
        lp.LinearProgram([1.0], sense="maximize")


def test_degenerate_cycling_example():
    # Beale's classic cycling example; Bland's fallback must terminate
    c = [0.75, -150.0, 0.02, -6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    sol = lp.solve(lp.LinearProgram(c, "max", A_le=A, b_le=[0.0, 0.0, 1.0]))
    assert sol.objective_value == pytest.approx(0.05)


@settings(max_examples=60)
@given(st.integers(0, 10**6))
def test_random_lps_match_highs(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(2, 5), rng.integers(1, 6)
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.1, 2.0, size=m)
    c = rng.normal(size=n)
    bounds = [(0.0, float(rng.uniform(0.5, 3.0))) for _ in range(n)]
    ours = lp.solve(lp.LinearProgram(c, "max", A_le=A, b_le=b, bounds=bounds))
    ref = linprog(-c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    assert ours.optimal and ref.status == 0
    assert ours.objective_value == pytest.approx(-ref.fun, abs=1e-7)
    assert np.all(A @ ours.point <= b + 1e-8)


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_random_small_lps_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 2
    G = np.vstack([rng.normal(size=(3, n)), -np.eye(n), np.eye(n)])
    h = np.r_[rng.uniform(0.2, 1.5, 3), np.zeros(n), np.ones(n)]
    c = rng.normal(size=n)
    ours = lp.solve(lp.LinearProgram(c, "max", A_le=G, b_le=h, bounds=[(None, None)] * n))
    ref = brute_lp(c, G, h)
    assert ref is not None
    assert ours.objective_value == pytest.approx(ref[0], abs=1e-8)


def test_equality_with_redundant_rows():
    # second equality duplicates the first; phase 1 must drop it
    sol = lp.solve(lp.LinearProgram([1.0, 2.0], "max", A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0]))
    assert sol.objective_value == pytest.approx(2.0)
