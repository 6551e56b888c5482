"""Model-free Z-learning of the desirability table from passive samples."""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from math import log
from typing import Optional, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ingest import NoisyEnsemble
from .model import (
    ControlConfig,
    DesirabilityTable,
    HarmonicSchedule,
    NumericalError,
    check_simplex,
    check_transition_matrix,
    check_utility,
)
from .solver import compute_policy

Sampler = Union[np.ndarray, NoisyEnsemble]


def z_update(z_prev: float, z_next_observed: float, utility: float, gamma: float, eta: float) -> float:
    """One stochastic-approximation step toward ``exp(U / gamma) * z_next``."""
    return (1.0 - eta) * z_prev + eta * np.exp(utility / gamma) * z_next_observed


def _cdf(matrix) -> list:
    c = np.cumsum(np.atleast_2d(matrix), axis=1)
    c[:, -1] = 1.0
    return c.tolist()


def _walk(cdf_rows: list, initial_cdf: list, u) -> list:
    s = bisect_right(initial_cdf, u[0])
    states = [s]
    for x in u[1:]:
        s = bisect_right(cdf_rows[s], x)
        states.append(s)
    return states


def sample_trajectory(source, horizon: int, rng: np.random.Generator,
                      start: Optional[int] = None, initial=None) -> np.ndarray:
    """Chain ``horizon`` states under the passive dynamics.

    The first state is ``start`` if given, otherwise drawn from ``initial``
    (uniform by default).  A :class:`NoisyEnsemble` source contributes one
    uniformly chosen member for the whole trajectory.
    """
    if isinstance(source, NoisyEnsemble):
        P = source.members[rng.integers(source.n_members)]
    else:
        P = check_transition_matrix(source)
    n = P.shape[0]
    if start is not None:
        initial = np.eye(n)[start]
    elif initial is None:
        initial = np.full(n, 1.0 / n)
    return np.array(_walk(_cdf(P), _cdf(initial)[0], rng.random(horizon)))


def value_error(reference, estimate) -> np.ndarray:
    """Relative L1 gap ``sum|ref - est| / sum(ref)`` along the state axis."""
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimate, dtype=float)
    if ref.shape != est.shape:
        raise ValueError("reference and estimate shapes differ")
    denom = ref.sum(axis=-1)
    if np.any(denom <= 0):
        raise ValueError("reference values must have a positive sum in every slice")
    return np.abs(ref - est).sum(axis=-1) / denom


def policy_rms_diff(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("policies differ in shape")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def iterations_to_threshold(error_history, threshold: float = 0.10) -> Optional[int]:
    """First iteration (1-based) at which every slice's error is below ``threshold``."""
    hist = np.asarray(error_history)
    if hist.size == 0:
        return None
    hit = np.flatnonzero(hist.max(axis=1) < threshold)
    return int(hit[0]) + 1 if hit.size else None


@dataclass
class LearningRun:
    z_hat: DesirabilityTable
    iterations: int
    converged: bool
    config: ControlConfig
    error_history: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    delta_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    def policy(self, passive) -> np.ndarray:
        return compute_policy(passive, self.z_hat)

    def iterations_to(self, threshold: float = 0.10) -> Optional[int]:
        return iterations_to_threshold(self.error_history, threshold)


def _passive_of(sampler) -> np.ndarray:
    return sampler.base if isinstance(sampler, NoisyEnsemble) else check_transition_matrix(sampler)


def run_zlearning(sampler: Sampler, utility, config: ControlConfig,
                  reference: Optional[DesirabilityTable] = None) -> LearningRun:
    """Learn the desirability table from passive trajectories.

    Every iteration draws one trajectory over the whole horizon and updates
    each interior slice at the visited state from the observed successor,
    using the previous iteration's values.  Stops once the largest relative
    change ``|dz| / z`` in an iteration drops below ``config.convergence_eps`` or after
    ``config.max_iterations``; running out of budget is reported through
    ``converged=False``, not raised.
    """
    passive = _passive_of(sampler)
    n = passive.shape[0]
    U = check_utility(utility, n)
    T = U.shape[0]
    if config.horizon_length is not None and config.horizon_length != T:
        raise ValueError("utility horizon does not match config.horizon_length")
    gamma = config.gamma
    with np.errstate(over="raise"):
        try:
            gain = np.exp(U / gamma)
        except FloatingPointError:
            raise NumericalError("utility / gamma too large for linear-domain Z-learning") from None
    if np.any(gain == 0.0):
        raise NumericalError("utility / gamma too small for linear-domain Z-learning")
    initial = None
    if config.initial_distribution is not None:
        initial = check_simplex(config.initial_distribution, n)

    ref_phi = None
    if reference is not None:
        if reference.log_z.shape != U.shape:
            raise ValueError("reference table shape does not match utility")
        ref_phi = reference.phi[:-1]
        if np.any(ref_phi.sum(axis=1) <= 0):
            raise ValueError("reference values must have a positive sum in every slice")

    cdfs = [_cdf(m) for m in sampler.members] if isinstance(sampler, NoisyEnsemble) else [_cdf(passive)]
    initial_cdf = _cdf(np.full(n, 1.0 / n) if initial is None else initial)[0]
    traj_ss, member_ss = np.random.SeedSequence(config.rng_seed).spawn(2)
    traj_rng = np.random.default_rng(traj_ss)
    member_rng = np.random.default_rng(member_ss)

    z = np.ones((T, n))
    z[-1] = gain[-1]
    z = z.tolist()
    gain_rows = gain.tolist()
    schedule = config.learning_rate
    tracking = ref_phi is not None
    if tracking:
        ref_rows = ref_phi.tolist()
        denom = ref_phi.sum(axis=1).tolist()
        abs_err = np.abs(ref_phi).tolist()
        err_sum = [sum(r) for r in abs_err]
    errors, deltas = [], []
    converged = False
    k = 0
    block = None
    while k < config.max_iterations:
        if k % 1024 == 0:
            block = traj_rng.random((1024, T)).tolist()
        u = block[k % 1024]
        k += 1
        eta = schedule(k)
        cdf = cdfs[member_rng.integers(len(cdfs))] if len(cdfs) > 1 else cdfs[0]
        traj = _walk(cdf, initial_cdf, u)
        # successor value from the previous iteration
        z_next = z[T - 1][traj[T - 1]]
        delta = 0.0
        for t in range(T - 2, -1, -1):
            b = traj[t]
            old = z[t][b]
            new = (1.0 - eta) * old + eta * gain_rows[t][b] * z_next
            if not new > 0.0:
                raise NumericalError("desirability underflowed to zero; increase gamma")
            z[t][b] = new
            z_next = old
            d = abs(new - old) / old
            if d > delta:
                delta = d
            if tracking:
                e = abs(ref_rows[t][b] + gamma * log(new))
                err_sum[t] += e - abs_err[t][b]
                abs_err[t][b] = e
        deltas.append(delta)
        if tracking:
            errors.append([err_sum[t] / denom[t] for t in range(T - 1)])
        if delta < config.convergence_eps:
            converged = True
            break
    z = np.array(z)

    history = np.array(errors) if errors else np.empty((0, T - 1))
    return LearningRun(
        z_hat=DesirabilityTable.from_z(z, gamma),
        iterations=k,
        converged=converged,
        config=config,
        error_history=history,
        delta_history=np.array(deltas),
    )


class ZLearner(BaseEstimator):
    """Z-learning with the scikit-learn estimator surface.

    ``fit`` accepts either a passive matrix or a :class:`NoisyEnsemble` as
    the sample source; the returned policy is always formed against the
    (base) passive matrix.

    Attributes
    ----------
    run_ : LearningRun
    desirability_ : DesirabilityTable
    policy_ : ndarray of shape (horizon - 1, n_states, n_states)
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, gamma: float = 1.0, learning_rate_scale: float = 1000.0,
                 convergence_eps: float = 1e-6, max_iterations: int = 10_000,
                 random_state: int = 0, initial_distribution=None):
        self.gamma = gamma
        self.learning_rate_scale = learning_rate_scale
        self.convergence_eps = convergence_eps
        self.max_iterations = max_iterations
        self.random_state = random_state
        self.initial_distribution = initial_distribution

    def _config(self, horizon: int) -> ControlConfig:
        return ControlConfig(
            gamma=self.gamma,
            horizon_length=horizon,
            convergence_eps=self.convergence_eps,
            learning_rate=HarmonicSchedule(self.learning_rate_scale),
            max_iterations=self.max_iterations,
            rng_seed=self.random_state,
            initial_distribution=self.initial_distribution,
        )

    def fit(self, sampler, utility, reference=None):
        U = check_utility(utility)
        self.run_ = run_zlearning(sampler, U, self._config(U.shape[0]), reference)
        self.desirability_ = self.run_.z_hat
        self.policy_ = compute_policy(_passive_of(sampler), self.desirability_)
        self.n_iter_ = self.run_.iterations
        self.converged_ = self.run_.converged
        return self

    @property
    def value_(self) -> np.ndarray:
        check_is_fitted(self, "desirability_")
        return self.desirability_.phi

    def predict(self, initial):
        from .dispatch import propagate_occupancy

        check_is_fitted(self, "policy_")
        return propagate_occupancy(initial, self.policy_)
