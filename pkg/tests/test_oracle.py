import numpy as np
import pytest

from persuade import BiasInterval, Instance
from persuade import fixtures
from persuade.geometry import safe_region, vertex_decompose
from persuade.oracle import (
    brute_best_response,
    brute_opt_binary,
    brute_opt_general,
    brute_vertex_enum,
    simplex_grid,
)
from persuade.receiver import best_response

B = fixtures.BINARY


def test_best_response_examples(fig2, rng):
    assert brute_best_response(np.array([0.0, 0.0, 1.0]), 0.85, fig2) == 2
    assert brute_best_response(fig2.prior, 0.85, fig2) == 0
    for _ in range(10**4 // 10):
        nu = rng.dirichlet(np.ones(3))
        a = rng.uniform(0.05, 1)
        assert brute_best_response(nu, a, fig2) == best_response(nu, a, fig2)


def test_opt_binary():
    assert brute_opt_binary(B, 0.7) == pytest.approx(1 / 3, abs=1e-4)
    assert brute_opt_binary(B, 1.0) == pytest.approx(5 / 12, abs=1e-4)
    assert brute_opt_binary(B, 0.4) == 0.0
    with pytest.raises(ValueError):
        brute_opt_binary(B, 0.7, grid_step=1e-2)


def test_opt_general(binary_inst, fig2):
    for a in (0.5, 0.7, 1.0):
        assert brute_opt_general(binary_inst, a) == pytest.approx(brute_opt_binary(B, a), abs=1e-4)
    const = fixtures.fig2_instance(u_sender=np.full((3, 3), 0.7))
    assert brute_opt_general(const, 0.6) == pytest.approx(0.7)
    lp, grid = brute_opt_general(fig2, 0.85, cross_check=True)
    assert abs(lp - grid) <= 0.02


def test_vertex_enum(binary_inst, fig2):
    inst = Instance((0, 1, 2), (0, 1), np.array([0.3, 0.3, 0.4]), np.zeros((2, 3)),
                    np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]))
    V = brute_vertex_enum(safe_region(0, BiasInterval(0.5, 0.5), inst))
    assert len(V) == 3
    V = brute_vertex_enum(safe_region(1, BiasInterval(0.65, 0.75), binary_inst))
    assert sorted(V[:, 1]) == pytest.approx([0.25 + 0.35 / 0.65, 1.0])
    reg = safe_region(2, BiasInterval(0.84, 0.86), fig2)
    V = brute_vertex_enum(reg)
    assert all(reg.contains(v, 1e-9) for v in V)
    support = vertex_decompose(V.mean(axis=0), reg)
    for _, at in support:
        assert min(np.linalg.norm(at.vertex - v) for v in V) < 1e-7


def test_simplex_grid():
    g = simplex_grid(3, 0.5)
    assert len(g) == 6
    np.testing.assert_allclose(g.sum(axis=1), 1.0)
