"""Brute-force Bellman reference for tiny instances.

Minimizes the one-step cost-to-go directly over a grid on the probability
simplex instead of using the closed-form policy.  Only meant for checking
the solver; cost grows like ``resolution ** (n_states - 1)``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .model import check_transition_matrix, check_utility

MAX_STATES = 4
MAX_HORIZON = 4
MAX_GRID_POINTS = 20_000_000


def _compositions(dim: int, total: int) -> np.ndarray:
    if dim == 1:
        return np.array([[total]])
    if dim == 2:
        i = np.arange(total + 1)
        return np.column_stack([i, total - i])
    blocks = []
    for first in range(total + 1):
        rest = _compositions(dim - 1, total - first)
        blocks.append(np.column_stack([np.full(len(rest), first), rest]))
    return np.vstack(blocks)


@lru_cache(maxsize=8)
def simplex_grid(dim: int, resolution: int) -> np.ndarray:
    """All points of the ``dim``-simplex with coordinates in ``{0, 1/R, ..., 1}``."""
    grid = _compositions(dim, resolution) / resolution
    grid.setflags(write=False)
    return grid


def _grid_size(dim: int, resolution: int) -> int:
    from math import comb

    return comb(resolution + dim - 1, dim - 1)


def bellman_oracle(passive, utility, gamma: float, grid_resolution: int = 1000):
    """Backward grid search of ``phi[t, b] = min_p -U[t, b] + sum_a p_a (gamma log(p_a / P[b, a]) + phi[t+1, a])``.

    Returns ``(phi, policy)`` with ``phi`` of shape ``(T, n)`` and ``policy``
    of shape ``(T - 1, n, n)``.  Entries outside the passive support are held
    at zero since the divergence is infinite there.
    """
    P = check_transition_matrix(passive)
    U = check_utility(utility, P.shape[0])
    n, T = P.shape[0], U.shape[0]
    if n > MAX_STATES or T > MAX_HORIZON:
        raise ValueError(f"oracle limited to {MAX_STATES} states and horizon {MAX_HORIZON}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    R = int(grid_resolution)
    if R < 1:
        raise ValueError("grid_resolution must be positive")

    phi = np.empty((T, n))
    phi[-1] = -U[-1]
    policy = np.zeros((T - 1, n, n))
    for t in range(T - 2, -1, -1):
        for b in range(n):
            support = np.flatnonzero(P[b] > 0)
            if _grid_size(support.size, R) > MAX_GRID_POINTS:
                raise ValueError("grid too large; lower grid_resolution")
            grid = simplex_grid(support.size, R)
            q = P[b, support]
            with np.errstate(divide="ignore", invalid="ignore"):
                plogp = np.where(grid > 0, grid * np.log(grid / q), 0.0)
            cost = gamma * plogp.sum(axis=1) + grid @ phi[t + 1, support]
            best = int(np.argmin(cost))
            phi[t, b] = -U[t, b] + cost[best]
            policy[t, b, support] = grid[best]
    return phi, policy
