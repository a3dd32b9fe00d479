import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persuade import BiasInterval, Instance
from persuade import fixtures
from persuade.errors import InfeasibleProjection, NotInRegion
from persuade.geometry import (
    LOWER,
    UPPER,
    delta_mu0,
    ic_constraint,
    interval_rhs,
    project_to_modified_region,
    relevant_actions,
    repair_bayes,
    repair_bayes_batch,
    repair_constant,
    rhs,
    safe_region,
    strict_interior_feasible,
    vertex_decompose,
)
from persuade.oracle import brute_projection, brute_relevant_actions, brute_vertex_enum
from persuade.receiver import scheme_value
from persuade.types import Scheme

J_BIN = BiasInterval(0.65, 0.75)


def b(x):
    return np.array([1.0 - x, x])


def cutoff(alpha):
    return 0.25 + 0.35 / alpha


def test_rhs_values(binary_inst):
    for a, c in ((0, 1), (1, 0)):
        assert rhs(a, c, 1.0, binary_inst) == 0.0
    # du . nu >= rhs is nu >= 0.95 in belief coordinates at alpha = 0.5
    du = binary_inst.u_receiver[1] - binary_inst.u_receiver[0]
    r = rhs(1, 0, 0.5, binary_inst)
    assert r == pytest.approx(-(du @ binary_inst.prior))
    assert du @ b(0.95) == pytest.approx(r)


def test_non_movable_pair():
    inst = Instance((0, 1), (0, 1, 2), np.array([0.5, 0.5]), np.zeros((3, 2)),
                    np.array([[0.0, 0.0], [1.0, -1.0], [-1.0, -1.0]]))
    assert not ic_constraint(0, 1, inst).movable
    assert rhs(0, 1, 0.3, inst) == 0.0
    assert interval_rhs(0, 1, (0.2, 0.9), inst) == 0.0
    assert ic_constraint(0, 1, inst).binding_tag is None


def test_interval_rhs(binary_inst):
    assert interval_rhs(1, 0, (0.7, 0.7), binary_inst) == rhs(1, 0, 0.7, binary_inst)
    # du . mu0 < 0 for the pair (1, 0), so the low endpoint sets the RHS
    assert interval_rhs(1, 0, J_BIN, binary_inst) == rhs(1, 0, 0.65, binary_inst)
    assert ic_constraint(1, 0, binary_inst).binding_tag == LOWER
    assert ic_constraint(0, 1, binary_inst).binding_tag == UPPER


def test_strict_feasibility_fig2(fig2):
    assert not strict_interior_feasible(1, BiasInterval(0.50, 0.60), fig2)
    assert strict_interior_feasible(1, BiasInterval(0.84, 0.86), fig2)
    for J in (BiasInterval(0.1, 0.2), BiasInterval(0.5, 1.0)):
        assert strict_interior_feasible(0, J, fig2)


def test_relevant_actions(binary_inst, fig2):
    assert relevant_actions(BiasInterval(0.5, 0.6), binary_inst) == (0, 1)
    assert 1 not in relevant_actions(BiasInterval(0.50, 0.60), fig2)
    assert 1 in relevant_actions(BiasInterval(0.84, 0.86), fig2)
    for alpha in (0.3, 0.55, 0.7, 0.85, 1.0):
        assert relevant_actions(BiasInterval(alpha, alpha), fig2) == brute_relevant_actions(alpha, fig2)


def test_delta_mu0():
    sym = Instance((0, 1), (0, 1), np.array([0.5, 0.5]), np.zeros((2, 2)),
                   np.array([[1.0, 1.0], [0.0, 0.0]]))
    # lone default action: only the simplex faces bound the ball around the barycenter
    # (a face nu(w) = 0 lies mu0(w) / sqrt(1 - 1/n) away inside the simplex plane)
    assert delta_mu0(sym) == pytest.approx(0.5 * np.sqrt(2), rel=1e-9)
    inst = fixtures.binary_instance()
    # belief-0.60 hyperplane at alpha=1 versus the faces, measured in the simplex plane
    expected = min(0.60 - 0.25, 0.25) * np.sqrt(2)
    assert delta_mu0(inst) == pytest.approx(expected, rel=1e-9)
    assert delta_mu0(fixtures.fig2_instance()) > 0


def test_decompose_vertex_and_segment(binary_inst):
    reg = safe_region(1, J_BIN, binary_inst)
    out = vertex_decompose(b(1.0), reg)
    assert len(out) == 1 and out[0][0] == pytest.approx(1.0)
    out = vertex_decompose(b(0.9), reg)
    beliefs = sorted(at.vertex[1] for _, at in out)
    assert beliefs == pytest.approx([cutoff(0.65), 1.0])
    mean = sum(w * at.vertex for w, at in out)
    np.testing.assert_allclose(mean, b(0.9), atol=1e-12)
    with pytest.raises(NotInRegion):
        vertex_decompose(b(0.5), reg)


def test_decompose_fig2_interior(fig2, rng):
    J = BiasInterval(0.84, 0.86)
    reg = safe_region(2, J, fig2)
    V = brute_vertex_enum(reg)
    for _ in range(20):
        nu = rng.dirichlet(np.ones(len(V))) @ V
        out = vertex_decompose(nu, reg)
        assert len(out) <= 3
        np.testing.assert_allclose(sum(w * at.vertex for w, at in out), nu, atol=1e-9)
        for _, at in out:
            assert min(np.linalg.norm(at.vertex - v) for v in V) < 1e-7


def test_vertex_enum_full_simplex():
    inst = Instance((0, 1, 2), (0, 1), np.array([0.3, 0.3, 0.4]), np.zeros((2, 3)),
                    np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]))
    V = brute_vertex_enum(safe_region(0, BiasInterval(0.5, 0.5), inst))
    assert sorted(map(tuple, np.round(V, 12))) == sorted(map(tuple, np.eye(3)))


def test_projection_binary(binary_inst):
    reg = safe_region(1, J_BIN, binary_inst)
    c = reg.constraints[0]
    nu = b(cutoff(0.65))
    np.testing.assert_allclose(project_to_modified_region(nu, reg, 0, c.interval_rhs(J_BIN)), nu, atol=1e-12)
    moved = project_to_modified_region(nu, reg, 0, c.rhs(0.70))
    assert moved[1] == pytest.approx(0.75)
    with pytest.raises(InfeasibleProjection):
        project_to_modified_region(nu, reg, 0, c.rhs(0.3))  # cutoff beyond belief 1


def test_projection_matches_enumeration(fig2, rng):
    J = BiasInterval(0.84, 0.86)
    reg = safe_region(2, J, fig2)
    for pinned in range(reg.m):
        c = reg.constraints[pinned]
        if not c.movable:
            continue
        for _ in range(5):
            nu = rng.dirichlet(np.ones(3))
            new = reg.b[pinned] + rng.uniform(-0.05, 0.0)
            keep = [i for i in range(reg.m) if i != pinned]
            G = np.vstack([reg.A[keep], np.eye(3)])
            h = np.r_[reg.b[keep], np.zeros(3)]
            E = np.vstack([np.ones(3), reg.A[pinned]])
            ref = brute_projection(nu, G, h, E, [1.0, new])
            if ref is None:
                with pytest.raises(InfeasibleProjection):
                    project_to_modified_region(nu, reg, pinned, new)
                continue
            got = project_to_modified_region(nu, reg, pinned, new)
            np.testing.assert_allclose(got, ref, atol=1e-8)


def test_projection_lipschitz_in_rhs(fig2):
    J = BiasInterval(0.84, 0.86)
    from persuade.general import vertex_safe_scheme
    base = vertex_safe_scheme(J, fig2)
    i = base.informative_ids[0]
    _, at = base.atoms[i]
    reg = safe_region(at.action, J, fig2)
    cid, _ = at.movable_binding
    ratios = []
    for d in (1e-1, 1e-2, 1e-3, 1e-4):
        try:
            x = project_to_modified_region(at.vertex, reg, cid, reg.b[cid] - d)
        except InfeasibleProjection:
            continue
        ratios.append(np.linalg.norm(x - at.vertex) / d)
    assert ratios and max(ratios) < 10 * min(ratios) + 1e-9
    assert max(ratios) < 50


def test_repair_noop_and_binary(binary_inst):
    prior = binary_inst.prior
    a0reg = safe_region(0, J_BIN, binary_inst)
    base = Scheme([2 / 3, 1 / 3], [b(0.0), b(0.75)], (0, 1), prior)
    same = repair_bayes(base, prior, a0reg)
    assert len(same) == 2 and not same.repaired
    P = np.array([b(0.0), b(0.76)])
    fixed = repair_bayes((base.weights, P, base.actions), prior, a0reg)
    assert fixed.repaired and len(fixed) == 3
    assert np.abs(fixed.weights @ fixed.posteriors - prior).max() <= 1e-12
    d = delta_mu0(binary_inst)
    assert np.linalg.norm(fixed.posteriors[-1] - prior) == pytest.approx(d / 2, rel=1e-9)
    assert fixed.actions[-1] == 0


def test_repair_utility_bound(binary_inst, rng):
    prior = binary_inst.prior
    a0reg = safe_region(0, J_BIN, binary_inst)
    base = Scheme([2 / 3, 1 / 3], [b(0.0), b(0.75)], (0, 1), prior)
    C = repair_constant(binary_inst)
    for _ in range(100):
        eps = rng.uniform(1e-4, 2e-2)
        P = np.array([b(0.0), b(0.75 + eps * rng.choice([-1, 1]))])
        rep = repair_bayes((base.weights, P, base.actions), prior, a0reg)
        pert = Scheme(rep.weights[:2] / rep.weights[:2].sum(), P, (0, 1), P.T @ (rep.weights[:2] / rep.weights[:2].sum()))
        gap = abs(scheme_value(rep, 1.0, binary_inst) - scheme_value(pert, 1.0, binary_inst))
        assert gap <= C * 1.0 * np.sqrt(2) * eps + 1e-12


def test_repair_batch_exact(fig2, rng):
    from persuade.general import probe_batch, vertex_safe_scheme
    J = BiasInterval(0.84, 0.86)
    base = vertex_safe_scheme(J, fig2)
    batch = probe_batch(base, np.linspace(0.841, 0.85, 7), fig2)
    assert batch.repaired
    assert batch.residuals.max() <= 1e-12
    W, P = base.scheme.weights[None], base.scheme.posteriors[None]
    zero = repair_bayes_batch(W, P, base.scheme.actions, fig2.prior, 0, delta_mu0(fig2))
    assert zero.weights[0, -1] <= 1e-12


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_random_regions_decompose(seed):
    rng = np.random.default_rng(seed)
    inst = fixtures.random_instance(rng, 3, 3)
    alpha = float(rng.uniform(0.3, 1.0))
    J = BiasInterval(max(0.01, alpha - 0.02), alpha)
    for a in relevant_actions(J, inst):
        reg = safe_region(a, J, inst)
        V = brute_vertex_enum(reg)
        if len(V) == 0:
            continue
        nu = rng.dirichlet(np.ones(len(V))) @ V
        out = vertex_decompose(nu, reg)
        assert len(out) <= 3
        np.testing.assert_allclose(sum(w * at.vertex for w, at in out), nu, atol=1e-9)
