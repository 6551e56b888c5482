"""Forward evaluation of a dispatch policy."""
from __future__ import annotations

import numpy as np

from .model import StateSpace, check_policy, check_simplex, check_transition_matrix, check_utility


def propagate_occupancy(initial, policy) -> np.ndarray:
    """Occupancy ``rho`` of shape ``(T, n)`` with ``rho[t+1] = rho[t] @ policy[t]``."""
    policy = check_policy(policy)
    rho0 = check_simplex(initial, policy.shape[1])
    rho = np.empty((policy.shape[0] + 1, rho0.size))
    rho[0] = rho0
    for t, P in enumerate(policy):
        rho[t + 1] = rho[t] @ P
    return rho


def expected_power(rho, states) -> np.ndarray:
    """Ensemble power (kW) per slice: occupancy weighted by rated power."""
    rated = states.rated_power if isinstance(states, StateSpace) else np.asarray(states, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if rho.shape[-1] != rated.size:
        raise ValueError("occupancy and state space disagree on n_states")
    return rho @ rated


def kl_rows(controlled, passive) -> np.ndarray:
    """Row-wise KL divergence ``KL(controlled[b] || passive[b])``, with ``0 log 0 = 0``."""
    Q = np.asarray(controlled, dtype=float)
    P = np.asarray(passive, dtype=float)
    if np.any((Q > 0) & (P == 0)):
        raise ValueError("controlled transition outside the passive support: KL is infinite")
    mask = Q > 0
    terms = np.zeros_like(Q)
    terms[mask] = Q[mask] * np.log(Q[mask] / np.broadcast_to(P, Q.shape)[mask])
    return terms.sum(axis=-1)


def evaluate_objective(policy, passive, utility, gamma: float, initial) -> float:
    """Expected cost of running ``policy`` from ``initial``.

    Each step ``t -> t+1`` contributes the expected negative utility at
    ``t+1`` under ``rho[t+1]`` plus ``gamma`` times the divergence of the
    controlled rows from the passive rows, weighted by ``rho[t]``.
    """
    P = check_transition_matrix(passive)
    policy = check_policy(policy, P.shape[0])
    U = check_utility(utility, P.shape[0])
    if U.shape[0] != policy.shape[0] + 1:
        raise ValueError("utility horizon must be one longer than the policy")
    rho = propagate_occupancy(initial, policy)
    kl = kl_rows(policy, P)
    energy = -(rho[1:] * U[1:]).sum()
    divergence = gamma * (rho[:-1] * kl).sum()
    return float(energy + divergence)


def energy_cost_utility(prices, states, dt_hours: float = 1.0) -> np.ndarray:
    """Utility schedule ``-(price[t] * rated_power[b] * dt)``, shape ``(len(prices), n_states)``."""
    rated = states.rated_power if isinstance(states, StateSpace) else np.asarray(states, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 1:
        raise ValueError("prices must be 1-d")
    return -np.outer(prices, rated) * dt_hours
