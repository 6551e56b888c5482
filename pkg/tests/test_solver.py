import time

import numpy as np
import pytest

from conftest import neighborhood_instance, random_stochastic
from ensemble_lsmdp import DesirabilityTable, backward_z, bellman_oracle, compute_policy, validate
from ensemble_lsmdp.dispatch import kl_rows
from ensemble_lsmdp.oracle import simplex_grid


def linear_recursion(P, U, gamma):
    """Plain matrix-product form z_t = diag(exp(U_t / gamma)) P z_{t+1}."""
    z = np.empty_like(U)
    z[-1] = np.exp(U[-1] / gamma)
    for t in range(U.shape[0] - 2, -1, -1):
        z[t] = np.diag(np.exp(U[t] / gamma)) @ P @ z[t + 1]
    return z


class TestBackwardZ:
    def test_zero_utility_fixed_point(self, rng):
        P = random_stochastic(rng, 5)
        table = backward_z(P, np.zeros((6, 5)), gamma=0.7)
        np.testing.assert_allclose(table.z, 1.0, rtol=1e-14)

    def test_two_state_hand_step(self):
        P = np.full((2, 2), 0.5)
        U = np.array([[0.0, 0.0], [0.0, np.log(2.0)]])
        z = backward_z(P, U, gamma=1.0).z
        np.testing.assert_allclose(z[1], [1.0, 2.0], rtol=1e-14)
        np.testing.assert_allclose(z[0], [1.5, 1.5], rtol=1e-14)

    def test_matches_matrix_product_form(self, rng):
        for _ in range(20):
            n, T = int(rng.integers(2, 9)), int(rng.integers(2, 8))
            P = random_stochastic(rng, n, zero_frac=0.3)
            U = rng.uniform(-2, 2, (T, n))
            gamma = float(rng.uniform(0.3, 3))
            np.testing.assert_allclose(backward_z(P, U, gamma).z, linear_recursion(P, U, gamma),
                                       rtol=1e-10)

    def test_terminal_slice(self, rng):
        P = random_stochastic(rng, 3)
        U = rng.normal(size=(4, 3))
        np.testing.assert_allclose(backward_z(P, U, 2.0).z[-1], np.exp(U[-1] / 2.0))

    def test_no_overflow_for_large_ratio(self, rng):
        P = random_stochastic(rng, 4)
        U = rng.uniform(-5000, 5000, (6, 4))
        table = backward_z(P, U, gamma=0.5)
        assert np.all(np.isfinite(table.log_z))
        assert validate(compute_policy(P, table)[0]) is None

    def test_deterministic(self, rng):
        P = random_stochastic(rng, 6)
        U = rng.normal(size=(5, 6))
        a, b = backward_z(P, U, 1.3), backward_z(P, U, 1.3)
        assert np.array_equal(a.log_z, b.log_z)

    @pytest.mark.parametrize("gamma", [0.0, -1.0])
    def test_rejects_gamma(self, gamma):
        with pytest.raises(ValueError):
            backward_z(np.eye(2), np.zeros((2, 2)), gamma)

    def test_rejects_non_finite_utility(self):
        with pytest.raises(ValueError):
            backward_z(np.eye(2), [[0.0, np.nan], [0.0, 0.0]], 1.0)

    def test_twelve_state_ten_hour_is_fast(self):
        _, P, U, gamma, _ = neighborhood_instance()
        start = time.perf_counter()
        compute_policy(P, backward_z(P, U, gamma))
        assert time.perf_counter() - start < 0.1


class TestComputePolicy:
    def test_uniform_desirability_returns_passive(self, rng):
        P = random_stochastic(rng, 4, zero_frac=0.4)
        policy = compute_policy(P, np.ones((3, 4)))
        for slice_ in policy:
            np.testing.assert_allclose(slice_, P, rtol=1e-14)

    def test_identity_passive(self, rng):
        z = rng.uniform(0.1, 10, (4, 3))
        for slice_ in compute_policy(np.eye(3), z):
            np.testing.assert_array_equal(slice_, np.eye(3))

    def test_reweighting(self):
        P = np.array([[0.5, 0.5], [0.5, 0.5]])
        z = np.array([[1.0, 1.0], [1.0, 3.0]])
        np.testing.assert_allclose(compute_policy(P, z)[0, 0], [0.25, 0.75])

    def test_kl_to_tilted_passive_is_zero(self, rng):
        P = random_stochastic(rng, 5, zero_frac=0.3)
        U = rng.normal(size=(4, 5))
        table = backward_z(P, U, 0.8)
        policy = compute_policy(P, table)
        for t in range(3):
            tilted = P * table.z[t + 1]
            tilted /= tilted.sum(axis=1, keepdims=True)
            np.testing.assert_allclose(kl_rows(policy[t], tilted), 0.0, atol=1e-10)

    def test_rejects_nonpositive_z(self):
        with pytest.raises(ValueError):
            compute_policy(np.eye(2), [[1.0, 1.0], [0.0, 1.0]])

    def test_accepts_table_or_array(self, rng):
        P = random_stochastic(rng, 3)
        z = rng.uniform(0.5, 2, (3, 3))
        np.testing.assert_allclose(compute_policy(P, z),
                                   compute_policy(P, DesirabilityTable.from_z(z, 1.0)))


class TestOracle:
    def test_grid_is_simplex(self):
        g = simplex_grid(3, 10)
        assert g.shape == (66, 3)
        np.testing.assert_allclose(g.sum(axis=1), 1.0)

    def test_zero_utility(self, rng):
        P = random_stochastic(rng, 3)
        phi, policy = bellman_oracle(P, np.zeros((3, 3)), 1.0, grid_resolution=400)
        np.testing.assert_allclose(phi, 0.0, atol=1e-3)
        for slice_ in policy:
            np.testing.assert_allclose(slice_, P, atol=1 / 400)

    def test_two_state_example(self):
        P = np.full((2, 2), 0.5)
        U = np.array([[0.0, 0.0], [0.0, np.log(2.0)]])
        phi, _ = bellman_oracle(P, U, 1.0, grid_resolution=1000)
        np.testing.assert_allclose(phi, backward_z(P, U, 1.0).phi, atol=1e-5)
        np.testing.assert_allclose(phi[0], -np.log(1.5), atol=1e-5)

    def test_policy_sweep(self, rng):
        R = 500
        for _ in range(5):
            P = random_stochastic(rng, 3)
            U = rng.uniform(-1, 1, (3, 3))
            _, policy = bellman_oracle(P, U, 1.0, grid_resolution=R)
            np.testing.assert_allclose(policy, compute_policy(P, backward_z(P, U, 1.0)), atol=2 / R)

    def test_respects_support(self):
        P = np.array([[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.2, 0.3, 0.5]])
        U = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 3.0]])
        _, policy = bellman_oracle(P, U, 1.0, grid_resolution=300)
        assert policy[0, 0, 2] == 0.0
        np.testing.assert_array_equal(policy[0, 1], [0.0, 1.0, 0.0])

    def test_guards(self):
        with pytest.raises(ValueError):
            bellman_oracle(np.eye(5), np.zeros((2, 5)), 1.0)
        with pytest.raises(ValueError):
            bellman_oracle(np.eye(2), np.zeros((5, 2)), 1.0)
        with pytest.raises(ValueError):
            bellman_oracle(np.full((4, 4), 0.25), np.zeros((2, 4)), 1.0, grid_resolution=2000)
