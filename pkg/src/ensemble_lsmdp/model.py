"""Core value types for a discretized load ensemble.

Matrices are stored source-row-major: ``P[beta, alpha]`` is the probability
of moving *from* state ``beta`` *to* state ``alpha``.  Time is 0-based, so
slice ``t`` of a horizon of length ``T`` runs over ``0 .. T-1`` and a policy
has ``T - 1`` slices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

ROW_SUM_TOL = 1e-9


class NumericalError(ArithmeticError):
    """A computation left the representable floating-point range."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateSpace:
    """Power bins of the ensemble with one rated power per bin (kW)."""

    bin_edges: np.ndarray
    rated_power: np.ndarray

    def __post_init__(self):
        edges = _frozen(self.bin_edges)
        rated = _frozen(self.rated_power)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "rated_power", rated)
        if edges.ndim != 1 or rated.ndim != 1:
            raise ValueError("bin_edges and rated_power must be 1-d")
        if rated.size < 2:
            raise ValueError(f"need at least 2 states, got {rated.size}")
        if edges.size != rated.size + 1:
            raise ValueError("bin_edges must have n_states + 1 entries")
        if not np.all(np.diff(edges) > 0):
            raise ValueError("bin_edges must be strictly increasing")
        if np.any(rated < edges[:-1]) or np.any(rated > edges[1:]):
            raise ValueError("rated_power must lie inside its bin")

    @property
    def n_states(self) -> int:
        return int(self.rated_power.size)

    @classmethod
    def from_edges(cls, bin_edges) -> "StateSpace":
        """Equal-weight state space with rated power at bin midpoints."""
        edges = np.asarray(bin_edges, dtype=float)
        return cls(edges, 0.5 * (edges[:-1] + edges[1:]))

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "bin_edges": self.bin_edges.tolist(),
            "rated_power": self.rated_power.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateSpace":
        space = cls(d["bin_edges"], d["rated_power"])
        if "n_states" in d and int(d["n_states"]) != space.n_states:
            raise ValueError("n_states does not match rated_power length")
        return space


@dataclass(frozen=True)
class Violation:
    """First broken invariant found by :func:`validate`."""

    kind: str
    row: Optional[int]
    message: str

    def __str__(self) -> str:
        return self.message


def validate(matrix, n_states: Optional[int] = None, tol: float = ROW_SUM_TOL):
    """Check the transition-matrix invariants.

    Returns ``None`` when the matrix is row-stochastic, otherwise the first
    :class:`Violation` encountered (shape, finiteness, range, then row sums).
    """
    P = np.asarray(matrix, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return Violation("shape", None, f"matrix must be square, got shape {P.shape}")
    if n_states is not None and P.shape[0] != n_states:
        return Violation(
            "shape", None, f"matrix has {P.shape[0]} states, expected {n_states}"
        )
    for i, row in enumerate(P):
        if not np.all(np.isfinite(row)):
            return Violation("finite", i, f"row {i} has non-finite entries")
        if np.any(row < 0) or np.any(row > 1):
            return Violation("range", i, f"row {i} has entries outside [0, 1]")
        s = float(np.sum(row))
        if abs(s - 1.0) > tol:
            return Violation("row_sum", i, f"row {i} sums to {s:.12g}")
    return None


def check_transition_matrix(matrix, n_states: Optional[int] = None) -> np.ndarray:
    """Validate and return a float copy of ``matrix``; raise ``ValueError`` if invalid."""
    violation = validate(matrix, n_states)
    if violation is not None:
        raise ValueError(f"invalid transition matrix: {violation}")
    return np.array(matrix, dtype=float)


def check_policy(policy, n_states: Optional[int] = None) -> np.ndarray:
    P = np.asarray(policy, dtype=float)
    if P.ndim != 3:
        raise ValueError(f"policy must be a (T-1, n, n) array, got shape {P.shape}")
    for t, slice_ in enumerate(P):
        violation = validate(slice_, n_states)
        if violation is not None:
            raise ValueError(f"invalid policy slice {t}: {violation}")
    return np.array(P, dtype=float)


def check_utility(utility, n_states: Optional[int] = None) -> np.ndarray:
    U = np.asarray(utility, dtype=float)
    if U.ndim != 2:
        raise ValueError(f"utility must be (horizon, n_states), got shape {U.shape}")
    if U.shape[0] < 2:
        raise ValueError("utility horizon must be at least 2")
    if n_states is not None and U.shape[1] != n_states:
        raise ValueError(f"utility has {U.shape[1]} states, expected {n_states}")
    if not np.all(np.isfinite(U)):
        raise ValueError("utility contains non-finite values")
    return np.array(U, dtype=float)


def check_simplex(rho, n_states: Optional[int] = None, tol: float = ROW_SUM_TOL) -> np.ndarray:
    r = np.asarray(rho, dtype=float)
    if r.ndim != 1:
        raise ValueError("occupancy must be a 1-d vector")
    if n_states is not None and r.size != n_states:
        raise ValueError(f"occupancy has {r.size} states, expected {n_states}")
    if np.any(r < 0) or abs(r.sum() - 1.0) > tol:
        raise ValueError("occupancy must be non-negative and sum to 1")
    return np.array(r, dtype=float)


def phi_from_z(z, gamma: float) -> np.ndarray:
    return -gamma * np.log(np.asarray(z, dtype=float))


def z_from_phi(phi, gamma: float) -> np.ndarray:
    return np.exp(-np.asarray(phi, dtype=float) / gamma)


@dataclass(frozen=True)
class DesirabilityTable:
    """Desirability over ``(horizon, n_states)``, held in log form.

    ``log_z`` is stored so that large ``|U| / gamma`` cannot overflow; ``z``
    and the value table ``phi = -gamma * log z`` are derived on access.
    """

    log_z: np.ndarray
    gamma: float

    def __post_init__(self):
        log_z = _frozen(self.log_z)
        object.__setattr__(self, "log_z", log_z)
        if log_z.ndim != 2:
            raise ValueError("desirability table must be 2-d")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not np.all(np.isfinite(log_z)):
            raise ValueError("desirability must be strictly positive and finite")

    @classmethod
    def from_z(cls, z, gamma: float) -> "DesirabilityTable":
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise ValueError("desirability must be strictly positive")
        return cls(np.log(z), gamma)

    @property
    def z(self) -> np.ndarray:
        return np.exp(self.log_z)

    @property
    def phi(self) -> np.ndarray:
        return -self.gamma * self.log_z

    @property
    def horizon(self) -> int:
        return self.log_z.shape[0]

    @property
    def n_states(self) -> int:
        return self.log_z.shape[1]


@dataclass(frozen=True)
class HarmonicSchedule:
    """Learning rate ``scale / (scale + k)``; ``k`` counts iterations from 1."""

    scale: float = 1000.0

    def __call__(self, k):
        return self.scale / (self.scale + k)

    def to_dict(self) -> dict:
        return {"kind": "harmonic", "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "HarmonicSchedule":
        if d.get("kind", "harmonic") != "harmonic":
            raise ValueError(f"unknown learning-rate schedule {d.get('kind')!r}")
        return cls(float(d["scale"]))


@dataclass(frozen=True)
class ControlConfig:
    gamma: float = 1.0
    horizon_length: Optional[int] = None
    convergence_eps: float = 1e-6
    learning_rate: Callable = field(default_factory=HarmonicSchedule)
    max_iterations: int = 10_000
    rng_seed: int = 0
    initial_distribution: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.convergence_eps > 0:
            raise ValueError("convergence_eps must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.horizon_length is not None and self.horizon_length < 2:
            raise ValueError("horizon_length must be at least 2")
