import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from persuade import Instance, NonUniqueDefault
from persuade import fixtures
from persuade.oracle import brute_best_response, simplex_grid
from persuade.receiver import (
    best_response,
    best_response_batch,
    default_action,
    distort,
    receiver_value,
    scheme_value,
    sender_value,
)


def b(x):
    return np.array([1.0 - x, x])


def test_distort(binary_inst):
    nu = np.array([0.2, 0.8])
    np.testing.assert_allclose(distort(nu, binary_inst.prior, 1.0), nu)
    np.testing.assert_allclose(distort(binary_inst.prior, binary_inst.prior, 0.3), binary_inst.prior)
    np.testing.assert_allclose(distort(b(0.75), binary_inst.prior, 0.70), b(0.60))


def test_binary_best_response(binary_inst):
    # distorted belief exactly 0.60: indifference goes to the sender's favourite
    assert best_response(b(0.75), 0.70, binary_inst) == 1
    assert best_response(b(0.74), 0.70, binary_inst) == 0


def test_allowed_restriction(binary_inst):
    assert best_response(b(0.9), 0.7, binary_inst, allowed=(0,)) == 0


def test_fig2_a1_never_unique_at_low_bias(fig2):
    grid = simplex_grid(3, 0.01)
    hat = 0.45 * fig2.prior + 0.55 * grid
    ur = hat @ fig2.u_receiver.T
    others = np.max(ur[:, [0, 2]], axis=1)
    assert not np.any(ur[:, 1] > others + 1e-12)


def test_default_action(binary_inst, fig2):
    assert default_action(binary_inst) == 0
    assert default_action(fig2) == 0
    assert np.all((fig2.u_receiver @ fig2.prior)[1:] < 0)
    tie = Instance((0, 1), (0, 1, 2), np.array([0.5, 0.5]), np.zeros((3, 2)),
                   np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(NonUniqueDefault):
        default_action(tie)


def test_sender_value(binary_inst):
    assert sender_value(b(0.75), 0.70, binary_inst) == pytest.approx(1.0)
    assert sender_value(b(0.0), 0.70, binary_inst) == 0.0
    assert sender_value(binary_inst.prior, 0.5, binary_inst) == 0.0
    assert receiver_value(b(1.0), 1.0, binary_inst) == pytest.approx(0.4)


def test_scheme_value(binary):
    from persuade.binary import two_point_scheme
    inst = fixtures.binary_instance()
    assert scheme_value(two_point_scheme(0.7, binary), 0.7, inst) == pytest.approx(1 / 3)


def test_batch_shapes(fig2, rng):
    nus = rng.dirichlet(np.ones(3), size=(4, 5))
    out = best_response_batch(nus, 0.85, fig2)
    assert out.shape == (4, 5)
    assert out[2, 3] == best_response(nus[2, 3], 0.85, fig2)


@given(st.integers(0, 2**31), st.floats(0.05, 1.0))
def test_matches_oracle(seed, alpha):
    rng = np.random.default_rng(seed)
    inst = fixtures.random_instance(rng, 3, 4)
    nu = rng.dirichlet(np.ones(3))
    assert best_response(nu, alpha, inst) == brute_best_response(nu, alpha, inst)
