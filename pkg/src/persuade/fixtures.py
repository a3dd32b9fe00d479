"""Reference instances used by tests, the CLI and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .types import BinaryInstance, Instance, binary_as_general

BINARY = BinaryInstance(0.25, 0.60)
BINARY_ALPHA = 0.70

FIG2_PRIOR = (0.50, 0.27, 0.23)
FIG2_U_RECEIVER = (
    (0.0, 0.0, 0.0),
    (-2.1, 0.3, 0.9),
    (-2.1, -0.3, 1.5),
)
# Only the prior and receiver utilities are pinned down; this state-independent sender
# utility (a1 best, a2 second) is the declared companion used throughout.
FIG2_U_SENDER = (
    (0.0, 0.0, 0.0),
    (1.0, 1.0, 1.0),
    (0.5, 0.5, 0.5),
)
FIG2_ALPHA_LOW = 0.55
FIG2_ALPHA_HIGH = 0.85


def binary_instance() -> Instance:
    return binary_as_general(BINARY)


def fig2_instance(u_sender=FIG2_U_SENDER) -> Instance:
    return Instance(("w0", "w1", "w2"), ("a0", "a1", "a2"), np.array(FIG2_PRIOR),
                    np.array(u_sender, dtype=float), np.array(FIG2_U_RECEIVER))


def example1_instance() -> Instance:
    """Two states, three actions; mu0(state 1) = 0.1 and sender utility 0, 2, 10 by action."""
    return Instance(
        (0, 1), ("a1", "a2", "a3"),
        np.array([0.9, 0.1]),
        np.array([[0.0, 0.0], [2.0, 2.0], [10.0, 10.0]]),
        np.array([[0.0, 0.0], [-1.0, 4.0], [-51.0, 54.0]]),
    )


EXAMPLE1_ALPHA = 0.2


def random_instance(rng: np.random.Generator, n: int = 3, k: int = 3) -> Instance:
    """Random instance whose default action is unique with a clear margin."""
    while True:
        prior = rng.dirichlet(np.ones(n) * 2.0)
        if prior.min() < 0.05:
            continue
        ur = rng.uniform(-1, 1, size=(k, n))
        us = rng.uniform(0, 1, size=(k, n))
        v = np.sort(ur @ prior)
        if v[-1] - v[-2] > 1e-3:
            return Instance(tuple(range(n)), tuple(range(k)), prior / prior.sum(), us, ur)
