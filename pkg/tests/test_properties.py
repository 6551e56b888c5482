import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ensemble_lsmdp import (
    ControlConfig,
    backward_z,
    compute_policy,
    estimate_matrix,
    perturb_ensemble,
    propagate_occupancy,
    run_zlearning,
    validate,
)

SETTINGS = settings(max_examples=200, deadline=None)


@st.composite
def instances(draw, max_states=8, max_horizon=6):
    n = draw(st.integers(2, max_states))
    T = draw(st.integers(2, max_horizon))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n), size=n)
    mask = rng.random((n, n)) < draw(st.floats(0, 0.6))
    np.fill_diagonal(mask, False)
    P[mask] = 0.0
    P /= P.sum(axis=1, keepdims=True)
    U = rng.uniform(-3, 3, (T, n))
    gamma = draw(st.floats(0.1, 10))
    return P, U, gamma, rng


@SETTINGS
@given(st.integers(2, 10), st.lists(st.integers(0, 9), min_size=2, max_size=100),
       st.sampled_from([0.0, 0.1, 1.0]))
def test_estimate_is_stochastic(n, seq, smoothing):
    seq = [s % n for s in seq]
    assert validate(estimate_matrix(seq, n, smoothing)) is None


@SETTINGS
@given(instances(), st.floats(0, 0.3), st.integers(1, 5))
def test_perturbation_is_stochastic_on_support(inst, sigma, members):
    P, _, _, rng = inst
    ens = perturb_ensemble(P, members, sigma, seed=int(rng.integers(1000)))
    for m in ens.members:
        assert validate(m) is None
        assert np.all(m[P == 0] == 0)


@SETTINGS
@given(instances())
def test_policy_is_stochastic_and_keeps_support(inst):
    P, U, gamma, _ = inst
    policy = compute_policy(P, backward_z(P, U, gamma))
    for s in policy:
        assert validate(s) is None
        assert np.all(s[P == 0] == 0)


@SETTINGS
@given(instances())
def test_propagation_stays_on_simplex(inst):
    P, U, gamma, rng = inst
    rho = propagate_occupancy(rng.dirichlet(np.ones(P.shape[0])), compute_policy(P, backward_z(P, U, gamma)))
    assert np.all(rho >= 0)
    np.testing.assert_allclose(rho.sum(axis=1), 1.0, atol=1e-9)


@SETTINGS
@given(instances(max_states=5, max_horizon=5), st.integers(0, 60))
def test_learned_z_positive(inst, iters):
    P, U, gamma, rng = inst
    run = run_zlearning(P, U, ControlConfig(gamma=gamma, max_iterations=iters, rng_seed=int(rng.integers(99))))
    assert np.all(run.z_hat.z > 0)


@SETTINGS
@given(instances(), st.floats(0.01, 100))
def test_policy_scaling_invariance(inst, c):
    P, U, gamma, _ = inst
    a = compute_policy(P, backward_z(P, U, gamma))
    b = compute_policy(P, backward_z(P, c * U, c * gamma))
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
