"""Biased belief distortion and the receiver's best response."""

from __future__ import annotations

import numpy as np

from .errors import NonUniqueDefault
from .types import Instance

TOL_TIE = 1e-9


def _vec(nu) -> np.ndarray:
    return np.asarray(getattr(nu, "probs", nu), dtype=float)


def distort(nu, prior, alpha: float) -> np.ndarray:
    """Distorted belief (1 - alpha) * prior + alpha * nu."""
    return (1.0 - alpha) * _vec(prior) + alpha * _vec(nu)


def _allowed_mask(inst: Instance, allowed) -> np.ndarray:
    mask = np.zeros(inst.n_actions, dtype=bool)
    if allowed is None:
        mask[:] = True
    else:
        mask[list(allowed)] = True
    return mask


def best_response_batch(nus, alpha: float, inst: Instance, allowed=None, tol: float = TOL_TIE) -> np.ndarray:
    """Vectorized best response for posteriors stacked along the last axis.

    Among allowed actions maximizing expected u_R under the distorted belief
    (within ``tol``), pick the one maximizing expected u_S under the Bayesian
    posterior; remaining ties go to the lowest action index.
    """
    nus = np.asarray(nus, dtype=float)
    mask = _allowed_mask(inst, allowed)
    hat = (1.0 - alpha) * inst.prior + alpha * nus
    ur = hat @ inst.u_receiver.T
    ur = np.where(mask, ur, -np.inf)
    cand = ur >= ur.max(axis=-1, keepdims=True) - tol
    us = np.where(cand, nus @ inst.u_sender.T, -np.inf)
    cand &= us >= us.max(axis=-1, keepdims=True) - tol
    return np.argmax(cand, axis=-1)


def best_response(nu, alpha: float, inst: Instance, allowed=None) -> int:
    """Receiver action at Bayesian posterior ``nu`` under bias ``alpha``.

    Args:
        nu: posterior vector (or Posterior).
        alpha: bias level in (0, 1].
        inst: the instance.
        allowed: optional subset of action indices the receiver may choose from.

    Returns:
        The chosen action index.
    """
    return int(best_response_batch(_vec(nu)[None], alpha, inst, allowed)[0])


def default_action(inst: Instance) -> int:
    """The unique receiver-optimal action at the prior.

    Raises:
        NonUniqueDefault: if two actions tie at the prior within TOL_TIE.
    """
    vals = inst.u_receiver @ inst.prior
    order = np.argsort(-vals, kind="stable")
    if vals[order[0]] - vals[order[1]] <= TOL_TIE:
        raise NonUniqueDefault(
            f"actions {int(order[0])} and {int(order[1])} tie at the prior ({vals[order[0]]:.6g})"
        )
    return int(order[0])


def sender_value(nu, alpha: float, inst: Instance, allowed=None) -> float:
    """Reduced-form sender utility sum_w nu(w) u_S(a*(nu, alpha), w)."""
    nu = _vec(nu)
    a = best_response(nu, alpha, inst, allowed)
    return float(inst.u_sender[a] @ nu)


def receiver_value(nu, alpha: float, inst: Instance, allowed=None) -> float:
    """Receiver's expected utility under the Bayesian posterior when acting on the distorted one."""
    nu = _vec(nu)
    a = best_response(nu, alpha, inst, allowed)
    return float(inst.u_receiver[a] @ nu)


def scheme_values(weights, posteriors, alpha: float, inst: Instance, allowed=None):
    """Expected (sender, receiver) utilities of stacked schemes.

    ``weights`` has shape (..., k) and ``posteriors`` (..., k, n).
    """
    posteriors = np.asarray(posteriors, dtype=float)
    acts = best_response_batch(posteriors, alpha, inst, allowed)
    us = np.einsum("...kn,...kn->...k", posteriors, inst.u_sender[acts])
    ur = np.einsum("...kn,...kn->...k", posteriors, inst.u_receiver[acts])
    w = np.asarray(weights, dtype=float)
    return (w * us).sum(axis=-1), (w * ur).sum(axis=-1)


def scheme_value(scheme, alpha: float, inst: Instance, allowed=None) -> float:
    """Expected sender utility of a Scheme against an alpha-biased receiver."""
    return float(scheme_values(scheme.weights, scheme.posteriors, alpha, inst, allowed)[0])
