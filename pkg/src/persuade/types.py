"""Core domain types: instances, posteriors, schemes, bias intervals and traces."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidInstance,
    NonSimplexPrior,
    NotBayesPlausible,
    ZeroMassState,
)

TOL_PROB = 1e-9
TOL_BAYES = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """A finite persuasion instance (states, actions, prior, utilities).

    Actions and states are referred to by integer index everywhere in the
    library; ``states`` and ``actions`` keep the user-facing ids.
    """

    states: tuple
    actions: tuple
    prior: np.ndarray
    u_sender: np.ndarray
    u_receiver: np.ndarray
    u_max: float = field(init=False)
    key: str = field(init=False, repr=False)

    def __post_init__(self):
        prior = _frozen(self.prior)
        us = _frozen(self.u_sender)
        ur = _frozen(self.u_receiver)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "u_sender", us)
        object.__setattr__(self, "u_receiver", ur)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        n, k = len(self.states), len(self.actions)
        if n < 2 or k < 2:
            raise DimensionMismatch(f"need at least 2 states and 2 actions, got {n} and {k}")
        if prior.shape != (n,):
            raise DimensionMismatch(f"prior has shape {prior.shape}, expected ({n},)")
        for name, u in (("u_sender", us), ("u_receiver", ur)):
            if u.shape != (k, n):
                raise DimensionMismatch(f"{name} has shape {u.shape}, expected ({k}, {n})")
            if not np.all(np.isfinite(u)):
                raise InvalidInstance(f"{name} has non-finite entries")
        if not np.all(np.isfinite(prior)):
            raise NonSimplexPrior("prior has non-finite entries")
        if np.any(prior <= 0.0):
            raise ZeroMassState(f"prior must have full support, got {prior.tolist()}")
        if abs(prior.sum() - 1.0) > TOL_PROB:
            raise NonSimplexPrior(f"prior sums to {prior.sum():.12g}")
        object.__setattr__(self, "u_max", float(np.max(np.abs(us))))
        h = hashlib.sha1()
        for a in (prior, us, ur):
            h.update(np.ascontiguousarray(a).tobytes())
        object.__setattr__(self, "key", h.hexdigest())

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "prior": self.prior.tolist(),
            "u_sender": self.u_sender.tolist(),
            "u_receiver": self.u_receiver.tolist(),
        }


@dataclass(frozen=True)
class BinaryInstance:
    """Binary instance with prior ``mu0`` on state 1 and receiver cutoff ``q_hat``."""

    mu0: float
    q_hat: float

    def __post_init__(self):
        if not (0.0 < self.mu0 < self.q_hat < 1.0):
            raise InvalidInstance(f"need 0 < mu0 < q_hat < 1, got ({self.mu0}, {self.q_hat})")


@dataclass(frozen=True, eq=False)
class Posterior:
    """A belief over states. Tiny negative entries are clamped to zero."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1:
            raise DimensionMismatch("posterior must be a vector")
        if np.any(p < -TOL_PROB):
            raise NonSimplexPrior(f"posterior has negative entries: {p.tolist()}")
        if abs(p.sum() - 1.0) > TOL_PROB:
            raise NonSimplexPrior(f"posterior sums to {p.sum():.12g}")
        p = np.maximum(p, 0.0)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return len(self.probs)


@dataclass(frozen=True)
class BiasInterval:
    """Closed uncertainty interval [lo, hi] for the receiver's bias."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= 1.0 + 1e-12):
            raise ValueError(f"invalid bias interval [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def __iter__(self):
        yield self.lo
        yield self.hi


def _check_plausible(weights, posteriors, prior, tol):
    if np.any(weights < -TOL_PROB):
        raise NotBayesPlausible("negative atom weight")
    s = weights.sum(axis=-1)
    if np.any(np.abs(s - 1.0) > TOL_PROB):
        raise NotBayesPlausible(f"atom weights sum to {np.asarray(s).ravel()[:3]}")
    if np.any(posteriors < -TOL_PROB) or np.any(np.abs(posteriors.sum(axis=-1) - 1.0) > TOL_PROB):
        raise NotBayesPlausible("atom posterior is not a probability vector")
    mean = np.einsum("...k,...kn->...n", weights, posteriors)
    res = np.abs(mean - prior).max(axis=-1)
    if np.any(res > tol):
        raise NotBayesPlausible(f"posterior mean misses prior by {np.max(res):.3e}")
    return res


@dataclass(frozen=True, eq=False)
class Scheme:
    """Posterior-form signaling scheme: weights, posteriors (k x n) and actions.

    Construction validates Bayes plausibility, so every Scheme that exists
    has posterior mean equal to the prior within ``TOL_BAYES``.
    """

    weights: np.ndarray
    posteriors: np.ndarray
    actions: tuple
    prior: np.ndarray
    repaired: bool = False
    residual: float = field(init=False)

    def __post_init__(self):
        w = _frozen(self.weights)
        P = _frozen(np.atleast_2d(self.posteriors))
        pr = _frozen(self.prior)
        acts = tuple(int(a) for a in self.actions)
        if w.ndim != 1 or P.shape != (len(w), len(pr)) or len(acts) != len(w):
            raise DimensionMismatch(f"scheme shapes weights {w.shape}, posteriors {P.shape}, actions {len(acts)}")
        res = _check_plausible(w, P, pr, TOL_BAYES)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "posteriors", P)
        object.__setattr__(self, "prior", pr)
        object.__setattr__(self, "actions", acts)
        object.__setattr__(self, "residual", float(res))

    @property
    def atoms(self) -> list:
        """List of (weight, Posterior, rec_action) triples."""
        return [(float(w), Posterior(p), a) for w, p, a in zip(self.weights, self.posteriors, self.actions)]

    def __len__(self):
        return len(self.weights)

    def digest(self) -> str:
        h = hashlib.sha1(self.weights.tobytes())
        h.update(self.posteriors.tobytes())
        return h.hexdigest()[:12]

    def to_json(self) -> dict:
        return {
            "atoms": [
                {"weight": float(w), "posterior": p.tolist(), "action": int(a)}
                for w, p, a in zip(self.weights, self.posteriors, self.actions)
            ],
            "prior": self.prior.tolist(),
        }

    @staticmethod
    def single(prior, action: int) -> "Scheme":
        """The uninformative scheme: one atom at the prior."""
        return Scheme(np.ones(1), np.atleast_2d(prior), (action,), prior)


@dataclass(frozen=True, eq=False)
class SchemeBatch:
    """A sequence of K schemes sharing one atom layout (K x k weights, K x k x n posteriors).

    Used when an algorithm commits in advance to a list of probes that are
    played one after the other. Every member is validated like a Scheme.
    """

    weights: np.ndarray
    posteriors: np.ndarray
    actions: tuple
    prior: np.ndarray
    repaired: bool = False
    residuals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = _frozen(self.weights)
        P = _frozen(self.posteriors)
        pr = _frozen(self.prior)
        acts = tuple(int(a) for a in self.actions)
        if w.ndim != 2 or P.shape != w.shape + (len(pr),) or len(acts) != w.shape[1]:
            raise DimensionMismatch(f"batch shapes weights {w.shape}, posteriors {P.shape}")
        res = _check_plausible(w, P, pr, TOL_BAYES)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "posteriors", P)
        object.__setattr__(self, "prior", pr)
        object.__setattr__(self, "actions", acts)
        object.__setattr__(self, "residuals", _frozen(res))

    def __len__(self):
        return self.weights.shape[0]

    def __getitem__(self, j) -> Scheme:
        return Scheme(self.weights[j], self.posteriors[j], self.actions, self.prior, self.repaired)

    @staticmethod
    def of(s: Scheme) -> "SchemeBatch":
        return SchemeBatch(s.weights[None], s.posteriors[None], s.actions, s.prior, s.repaired)


@dataclass
class SegmentBlock:
    """A run of consecutive segments; segment j plays one scheme for ``lengths[j]`` rounds.

    Only the last round of each segment is an observed informative round;
    its realized state, atom, action and utilities are stored. Earlier rounds
    of a segment realized a non-watched atom.
    """

    start: int
    lengths: np.ndarray
    value: np.ndarray
    fired_atom: np.ndarray
    state: np.ndarray
    action: np.ndarray
    u_s: np.ndarray
    u_r: np.ndarray
    schemes: SchemeBatch
    realized_us: np.ndarray | None = None

    @property
    def total(self) -> int:
        return int(self.lengths.sum())


@dataclass
class Trace:
    """Segment-compressed record of one trial.

    Each segment is a run of rounds under one scheme. ``interval_history``
    holds (round, lo, hi) after every interval update and
    ``phase_intervals`` the interval at the start of every exploration phase.
    """

    horizon: int
    opt: float
    blocks: list = field(default_factory=list)
    interval_history: list = field(default_factory=list)
    phase_intervals: list = field(default_factory=list)
    committed: Scheme | None = None
    committed_param: float | None = None
    flags: dict = field(default_factory=dict)
    max_bayes_residual: float = 0.0
    max_repair_residual: float = 0.0
    n_schemes: int = 0
    n_repaired: int = 0

    @property
    def rounds_used(self) -> int:
        return sum(b.total for b in self.blocks)

    def _flat(self):
        if not self.blocks:
            z = np.zeros(0)
            return z.astype(np.int64), z
        L = np.concatenate([b.lengths for b in self.blocks])
        v = np.concatenate([b.value for b in self.blocks])
        return L, v

    def cumulative_regret(self, at: Sequence[int] | np.ndarray, form: str = "expected") -> np.ndarray:
        """Cumulative regret after ``at[i]`` rounds (0 <= at[i] <= rounds used)."""
        at = np.asarray(at, dtype=np.int64)
        if form == "realized":
            if any(b.realized_us is None for b in self.blocks):
                raise ValueError("trace was recorded without realized utilities")
            r = self.opt - np.concatenate([b.realized_us for b in self.blocks] or [np.zeros(0)])
            c = np.concatenate([[0.0], np.cumsum(r)])
            return c[at]
        L, v = self._flat()
        if len(L) == 0:
            return np.zeros(len(at))
        rate = self.opt - v
        ends = np.cumsum(L)
        cum_end = np.concatenate([[0.0], np.cumsum(L * rate)])
        idx = np.minimum(np.searchsorted(ends, at, side="left"), len(L) - 1)
        starts = ends - L
        partial = (at - starts[idx]) * rate[idx]
        out = cum_end[idx] + partial
        return np.where(at <= 0, 0.0, out)

    def final_regret(self, form: str = "expected") -> float:
        return float(self.cumulative_regret([self.rounds_used], form)[0])

    def records(self) -> Iterator[tuple]:
        """Observed rounds: (round, scheme digest, state, atom, action, u_S, u_R, benchmark)."""
        for b in self.blocks:
            ends = b.start + np.cumsum(b.lengths) - 1
            for j in range(len(b.lengths)):
                if b.fired_atom[j] < 0:
                    continue
                yield (int(ends[j]), b.schemes[j].digest(), int(b.state[j]), int(b.fired_atom[j]),
                       int(b.action[j]), float(b.u_s[j]), float(b.u_r[j]), self.opt)


# ---------------------------------------------------------------------------
# construction helpers


def validate_instance(raw: dict) -> Instance:
    """Build an Instance from a parsed JSON-like description.

    Accepts the general form ``{"states","actions","prior","u_sender",
    "u_receiver"}`` or the binary shorthand ``{"binary": {"mu0", "q_hat"}}``.

    Raises:
        NonSimplexPrior, ZeroMassState, DimensionMismatch
    """
    if "binary" in raw:
        b = raw["binary"]
        return binary_as_general(BinaryInstance(float(b["mu0"]), float(b["q_hat"])))
    try:
        prior = np.asarray(raw["prior"], dtype=float)
        us = np.asarray(raw["u_sender"], dtype=float)
        ur = np.asarray(raw["u_receiver"], dtype=float)
    except KeyError as exc:
        raise InvalidInstance(f"missing field {exc}") from None
    except ValueError as exc:  # ragged rows
        raise DimensionMismatch(str(exc)) from None
    states = raw.get("states", list(range(len(prior))))
    actions = raw.get("actions", list(range(len(us))))
    if len(states) != len(prior):
        raise DimensionMismatch("states and prior lengths differ")
    return Instance(tuple(states), tuple(actions), prior, us, ur)


def load_instance(path) -> Instance:
    with open(path) as fh:
        return validate_instance(json.load(fh))


def binary_as_general(b: BinaryInstance) -> Instance:
    """Embed a binary instance as 2 states x 2 actions with indicator sender utility.

    Receiver utility u_R(1, w) = 1{w=1} - q_hat and u_R(0, .) = 0, so action 1
    is weakly preferred exactly when the (distorted) belief in state 1 is at
    least q_hat.
    """
    q = b.q_hat
    return Instance(
        states=(0, 1),
        actions=(0, 1),
        prior=np.array([1.0 - b.mu0, b.mu0]),
        u_sender=np.array([[0.0, 0.0], [1.0, 1.0]]),
        u_receiver=np.array([[0.0, 0.0], [-q, 1.0 - q]]),
    )
