"""Power traces, state discretization and passive-dynamics estimation."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, datetime
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .model import StateSpace, check_transition_matrix, validate


@dataclass(frozen=True)
class PowerTrace:
    timestamps: np.ndarray
    power_kw: np.ndarray
    season: Optional[str] = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        p = np.array(self.power_kw, dtype=float)
        if ts.ndim != 1 or p.ndim != 1 or ts.size != p.size:
            raise ValueError("timestamps and power_kw must be 1-d and equally long")
        if ts.size > 1 and not np.all(np.diff(ts) > np.timedelta64(0, "s")):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("power_kw must be finite and non-negative")
        ts.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "power_kw", p)

    def __len__(self) -> int:
        return int(self.power_kw.size)

    def between(self, start: Optional[date] = None, end: Optional[date] = None) -> "PowerTrace":
        """Samples whose calendar date lies in ``[start, end]`` (inclusive)."""
        days = self.timestamps.astype("datetime64[D]")
        keep = np.ones(len(self), dtype=bool)
        if start is not None:
            keep &= days >= np.datetime64(start, "D")
        if end is not None:
            keep &= days <= np.datetime64(end, "D")
        return PowerTrace(self.timestamps[keep], self.power_kw[keep], self.season)


def read_trace_csv(path, season_from: Optional[date] = None,
                   season_to: Optional[date] = None, season: Optional[str] = None) -> PowerTrace:
    """Read a ``timestamp,power_kw`` CSV (header required) into a trace."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:2] != ["timestamp", "power_kw"]:
            raise ValueError(f"{path}: expected header 'timestamp,power_kw', got {header!r}")
        stamps, power = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2 or not row[0].strip() or not row[1].strip():
                raise ValueError(f"{path}:{lineno}: missing timestamp or power value")
            try:
                stamps.append(datetime.fromisoformat(row[0].strip()))
                power.append(float(row[1]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    trace = PowerTrace(np.array(stamps, dtype="datetime64[s]"), power, season)
    if season_from is not None or season_to is not None:
        trace = trace.between(season_from, season_to)
    return trace


def write_trace_csv(trace: PowerTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "power_kw"])
        for ts, p in zip(trace.timestamps, trace.power_kw):
            writer.writerow([str(ts), repr(float(p))])


def synthetic_hvac_trace(n_days: int = 30, season: str = "summer",
                         start: str = "2013-07-01", seed: int = 0) -> PowerTrace:
    """Hourly HVAC draw of a single house with a diurnal cycle.

    Summer load peaks mid-afternoon, winter load peaks overnight.  Used as
    the base profile for :func:`synthesize_neighborhood` when no metered
    trace is at hand.
    """
    rng = np.random.default_rng(seed)
    hours = np.arange(24 * n_days)
    hod = hours % 24
    if season == "summer":
        mean, swing, phase = 1.6, 1.3, 15.0
    elif season == "winter":
        mean, swing, phase = 6.0, 4.0, 4.0
    else:
        raise ValueError(f"unknown season {season!r}")
    diurnal = mean + swing * np.cos(2 * np.pi * (hod - phase) / 24)
    day_level = rng.normal(1.0, 0.1, n_days).repeat(24)
    # duty cycling of the compressor within the hour
    duty = rng.uniform(0.7, 1.0, hours.size)
    power = np.clip(diurnal * day_level * duty, 0.0, None)
    stamps = np.datetime64(start, "h") + hours.astype("timedelta64[h]")
    return PowerTrace(stamps, power, season)


def synthesize_neighborhood(base: PowerTrace, n_houses: int = 100,
                            noise_frac: float = 0.2, seed: int = 0) -> PowerTrace:
    """Aggregate ``n_houses`` copies of ``base``, each sample scaled by
    an independent factor drawn uniformly from ``[1 - noise_frac, 1 + noise_frac]``.
    """
    if len(base) == 0:
        raise ValueError("base trace is empty")
    if n_houses < 1:
        raise ValueError("n_houses must be at least 1")
    if not 0 <= noise_frac < 1:
        raise ValueError("noise_frac must be in [0, 1)")
    rng = np.random.default_rng(seed)
    factors = rng.uniform(1 - noise_frac, 1 + noise_frac, size=(n_houses, len(base)))
    total = (factors * base.power_kw).sum(axis=0)
    return PowerTrace(base.timestamps, total, base.season)


def _power_array(X) -> np.ndarray:
    if isinstance(X, PowerTrace):
        return np.asarray(X.power_kw)
    p = np.asarray(X, dtype=float)
    if p.ndim == 2 and p.shape[1] == 1:
        p = p[:, 0]
    if p.ndim != 1:
        raise ValueError("expected a 1-d power series")
    if not np.all(np.isfinite(p)):
        raise ValueError("power series contains non-finite values")
    return p


def assign_states(power, space: StateSpace) -> np.ndarray:
    """Bin index of each sample; the top edge is inclusive, out-of-range samples clip."""
    idx = np.searchsorted(space.bin_edges, _power_array(power), side="right") - 1
    return np.clip(idx, 0, space.n_states - 1)


def discretize(trace, n_states: int):
    """Equal-width binning of ``trace`` over its own ``[min, max]``.

    Returns ``(StateSpace, state_sequence)`` with rated power at bin midpoints.
    """
    p = _power_array(trace)
    if n_states < 2:
        raise ValueError(f"n_states must be at least 2, got {n_states}")
    if p.size < 2:
        raise ValueError("trace needs at least 2 samples")
    lo, hi = float(p.min()), float(p.max())
    if not hi > lo:
        raise ValueError("trace is constant; cannot discretize a zero power range")
    space = StateSpace.from_edges(np.linspace(lo, hi, n_states + 1))
    return space, assign_states(p, space)


def _transition_counts(sequences, n_states: int) -> np.ndarray:
    counts = np.zeros((n_states, n_states))
    for seq in sequences:
        s = np.asarray(seq, dtype=int)
        if s.size and (s.min() < 0 or s.max() >= n_states):
            raise ValueError("state index out of range")
        np.add.at(counts, (s[:-1], s[1:]), 1.0)
    return counts


def estimate_matrix(state_seq, n_states: int, smoothing: float = 0.0) -> np.ndarray:
    """Maximum-likelihood passive dynamics from an observed state sequence.

    ``smoothing`` is added to every count of rows that saw at least one
    transition; rows never left become self-loops.
    """
    seq = np.asarray(state_seq, dtype=int)
    if seq.ndim != 1 or seq.size < 2:
        raise ValueError("state sequence needs at least 2 samples")
    return _counts_to_matrix(_transition_counts([seq], n_states), smoothing)


def _counts_to_matrix(counts: np.ndarray, smoothing: float) -> np.ndarray:
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    n = counts.shape[0]
    P = np.eye(n)
    seen = counts.sum(axis=1) > 0
    rows = counts[seen] + smoothing
    P[seen] = rows / rows.sum(axis=1, keepdims=True)
    return P


@dataclass(frozen=True)
class NoisyEnsemble:
    """Perturbed copies of a passive matrix, sampled uniformly during learning."""

    base: np.ndarray
    members: np.ndarray
    sigma: float
    rng_seed: Optional[int] = None

    def __post_init__(self):
        base = check_transition_matrix(self.base)
        members = np.array(self.members, dtype=float)
        if members.ndim != 3 or members.shape[1:] != base.shape:
            raise ValueError("members must have shape (N, n, n) matching base")
        for i, m in enumerate(members):
            v = validate(m)
            if v is not None:
                raise ValueError(f"member {i}: {v}")
            if np.any((m > 0) & (base == 0)):
                raise ValueError(f"member {i} leaves the support of the base matrix")
        base.setflags(write=False)
        members.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "members", members)

    @property
    def n_members(self) -> int:
        return self.members.shape[0]

    @property
    def n_states(self) -> int:
        return self.base.shape[0]

    def mean_deviation(self) -> float:
        return float(np.max(np.abs(self.members.mean(axis=0) - self.base)))

    def satisfies_mean_check(self, n_sigma: float = 3.0) -> bool:
        """Member average within ``n_sigma * sigma / sqrt(N)`` of the base, elementwise."""
        return self.mean_deviation() <= n_sigma * self.sigma / np.sqrt(self.n_members)


def perturb_ensemble(base, n_members: int, sigma: float, seed: int = 0) -> NoisyEnsemble:
    """Zero-row-sum Gaussian perturbations restricted to the base support."""
    P = check_transition_matrix(base)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if n_members < 1:
        raise ValueError("n_members must be at least 1")
    streams = np.random.SeedSequence(seed).spawn(n_members)
    members = np.empty((n_members,) + P.shape)
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        M = P.copy()
        if sigma > 0:
            for b, row in enumerate(P):
                support = np.flatnonzero(row > 0)
                if support.size < 2:
                    continue
                eps = rng.normal(0.0, sigma, support.size)
                eps -= eps.mean()
                r = np.clip(row[support] + eps, 0.0, None)
                M[b] = 0.0
                M[b, support] = r / r.sum()
        members[i] = M
    return NoisyEnsemble(P, members, float(sigma), seed)


class PowerDiscretizer(TransformerMixin, BaseEstimator):
    """Map power samples to equal-width states learned from a training trace.

    Attributes
    ----------
    state_space_ : StateSpace
    """

    def __init__(self, n_states: int = 12):
        self.n_states = n_states

    def fit(self, X, y=None):
        self.state_space_, _ = discretize(X, self.n_states)
        return self

    def transform(self, X):
        check_is_fitted(self, "state_space_")
        return assign_states(X, self.state_space_)

    def inverse_transform(self, X):
        check_is_fitted(self, "state_space_")
        return self.state_space_.rated_power[np.asarray(X, dtype=int)]


class TransitionMatrixEstimator(BaseEstimator):
    """Count-based estimate of the passive dynamics.

    ``fit`` takes either one state sequence or a list of them; transitions
    are never counted across sequence boundaries.
    """

    def __init__(self, n_states: int = 12, smoothing: float = 0.0):
        self.n_states = n_states
        self.smoothing = smoothing

    def fit(self, X, y=None):
        if len(X) and np.ndim(X[0]) == 0:
            X = [X]
        seqs = [np.asarray(s, dtype=int) for s in X]
        if not any(s.size >= 2 for s in seqs):
            raise ValueError("need at least one sequence with 2 samples")
        self.transition_counts_ = _transition_counts(seqs, self.n_states)
        self.transition_matrix_ = _counts_to_matrix(self.transition_counts_, self.smoothing)
        return self

    def score(self, X, y=None):
        """Mean log-likelihood per transition of ``X`` under the fitted matrix."""
        check_is_fitted(self, "transition_matrix_")
        if len(X) and np.ndim(X[0]) == 0:
            X = [X]
        counts = _transition_counts(X, self.n_states)
        with np.errstate(divide="ignore"):
            logp = np.log(self.transition_matrix_)
        mask = counts > 0
        return float((counts[mask] * logp[mask]).sum() / counts.sum())
