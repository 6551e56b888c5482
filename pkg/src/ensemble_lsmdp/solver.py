"""Exact model-based solution of the KL-regularized dispatch problem."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .model import (
    DesirabilityTable,
    check_simplex,
    check_transition_matrix,
    check_utility,
)


def backward_z(passive, utility, gamma: float) -> DesirabilityTable:
    """Backward desirability recursion.

    ``z[T-1] = exp(U[T-1] / gamma)`` and, for earlier slices,
    ``z[t, b] = exp(U[t, b] / gamma) * sum_a P[b, a] * z[t+1, a]``.
    Carried out in log space so ``|U| / gamma`` can be arbitrarily large.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    P = check_transition_matrix(passive)
    U = check_utility(utility, P.shape[0])
    scaled = U / gamma
    log_z = np.empty_like(U)
    log_z[-1] = scaled[-1]
    for t in range(U.shape[0] - 2, -1, -1):
        log_z[t] = scaled[t] + logsumexp(
            np.broadcast_to(log_z[t + 1], P.shape), b=P, axis=1
        )
    return DesirabilityTable(log_z, gamma)


def _log_table(z) -> np.ndarray:
    if isinstance(z, DesirabilityTable):
        return np.asarray(z.log_z)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("desirability must be strictly positive")
    return np.log(z)


def compute_policy(passive, z) -> np.ndarray:
    """Optimal controlled dynamics, one row-stochastic slice per step.

    Row ``b`` of slice ``t`` is ``P[b] * z[t+1]`` renormalized, so transitions
    impossible under ``passive`` stay impossible.
    """
    P = check_transition_matrix(passive)
    log_z = _log_table(z)
    if log_z.ndim != 2 or log_z.shape[1] != P.shape[0]:
        raise ValueError("desirability table does not match the passive matrix")
    # per-slice shift leaves the normalized rows unchanged
    w = np.exp(log_z[1:] - log_z[1:].max(axis=1, keepdims=True))
    policy = P[None, :, :] * w[:, None, :]
    policy /= policy.sum(axis=2, keepdims=True)
    return policy


class LSMDPSolver(BaseEstimator):
    """Model-based solver with the scikit-learn estimator surface.

    Parameters
    ----------
    gamma : float
        Weight of the KL deviation cost.

    Attributes
    ----------
    passive_ : ndarray of shape (n_states, n_states)
    utility_ : ndarray of shape (horizon, n_states)
    desirability_ : DesirabilityTable
    policy_ : ndarray of shape (horizon - 1, n_states, n_states)
    """

    def __init__(self, gamma: float = 1.0):
        self.gamma = gamma

    def fit(self, passive, utility):
        self.passive_ = check_transition_matrix(passive)
        self.utility_ = check_utility(utility, self.passive_.shape[0])
        self.desirability_ = backward_z(self.passive_, self.utility_, self.gamma)
        self.policy_ = compute_policy(self.passive_, self.desirability_)
        return self

    @property
    def value_(self) -> np.ndarray:
        check_is_fitted(self, "desirability_")
        return self.desirability_.phi

    def predict(self, initial):
        """Occupancy trajectory obtained by running the optimal policy from ``initial``."""
        from .dispatch import propagate_occupancy

        check_is_fitted(self, "policy_")
        return propagate_occupancy(initial, self.policy_)

    def score(self, initial):
        """Negative dispatch objective, so that larger is better."""
        from .dispatch import evaluate_objective

        check_is_fitted(self, "policy_")
        rho = check_simplex(initial, self.passive_.shape[0])
        return -evaluate_objective(self.policy_, self.passive_, self.utility_, self.gamma, rho)
