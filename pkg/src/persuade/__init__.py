"""Safe exploration for persuading a receiver with an unknown linear belief bias.

Submodules:
    types     instances, posteriors, schemes, bias intervals, traces
    lp        dense two-phase simplex solver
    receiver  belief distortion and best response
    geometry  interval-safe regions, vertices, projection and repair
    binary    binary closed forms and the BS / SE / SEJ learners
    general   localization and General Safe Exploration
    sim       seeded environment, regret accounting, trials
    oracle    brute-force references for testing
    cli       command-line interface
"""

from .errors import *  # noqa: F401,F403
from .types import (  # noqa: F401
    BiasInterval,
    BinaryInstance,
    Instance,
    Posterior,
    Scheme,
    SchemeBatch,
    Trace,
    binary_as_general,
    load_instance,
    validate_instance,
)

__version__ = "0.1.0"
