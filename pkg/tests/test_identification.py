import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from dppca.data import McmcConfig, PriorConfig, center_per_time
from dppca.identification import (
    RankDeficientWarning,
    identify_chain,
    loading_dispersion,
    procrustes_rotation,
    signed_permutation_rotation,
    unify_timepoints,
)
from dppca.ppca import fit_all_timepoints
from dppca.sampler import run_chain
from dppca.simulate import simulate_dppca


@pytest.fixture(scope="module")
def fitted():
    ds, truth = simulate_dppca(rng=8)
    ds = center_per_time(ds)
    fits = fit_all_timepoints(ds, 2)
    chain = run_chain(ds, PriorConfig(), McmcConfig(n_iterations=1500, thin=5, burn_in_raw=500, seed=8), fits)
    return chain, fits


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(5, 12))
def test_recovers_a_planted_rotation(seed, q, p):
    rng = np.random.default_rng(seed)
    T = rng.normal(size=(p, q))
    R0 = ortho_group.rvs(q, random_state=rng) if q > 1 else np.array([[rng.choice([-1.0, 1.0])]])
    R = procrustes_rotation(T @ R0.T, T)
    np.testing.assert_allclose(R, R0, atol=1e-8)
    np.testing.assert_allclose(R.T @ R, np.eye(q), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_rotation_is_optimal_against_random_rotations(seed):
    rng = np.random.default_rng(seed)
    A, T = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    best = np.linalg.norm(A @ procrustes_rotation(A, T) - T)
    for _ in range(20):
        assert best <= np.linalg.norm(A @ ortho_group.rvs(3, random_state=rng) - T) + 1e-12


def test_procrustes_errors_and_warnings():
    with pytest.raises(ValueError, match="shapes"):
        procrustes_rotation(np.ones((3, 2)), np.ones((4, 2)))
    with pytest.raises(ValueError, match="finite"):
        procrustes_rotation(np.full((3, 2), np.nan), np.ones((3, 2)))
    A = np.zeros((4, 2))
    A[0, 0] = 1.0
    with pytest.warns(RankDeficientWarning):
        procrustes_rotation(A, np.eye(4, 2))


def test_signed_permutation_finds_swap():
    T = np.array([[3.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    A = T[:, ::-1] * np.array([1.0, -1.0])
    R = signed_permutation_rotation(A, T)
    np.testing.assert_allclose(A @ R, T)


def test_reconstruction_is_invariant(fitted):
    chain, fits = fitted
    ident = identify_chain(chain, fits)
    before = chain.U @ chain.W.transpose(0, 1, 3, 2)
    after = ident.U @ ident.W.transpose(0, 1, 3, 2)
    assert np.abs(before - after).max() < 1e-10
    # log-volatilities and the joint density are untouched
    np.testing.assert_array_equal(ident.lam, chain.lam)
    np.testing.assert_array_equal(ident.log_posterior_trace, chain.log_posterior_trace)


def test_identification_is_idempotent(fitted):
    chain, fits = fitted
    once = identify_chain(chain, fits)
    twice = identify_chain(once, fits)
    np.testing.assert_allclose(twice.W, once.W, atol=1e-10)
    np.testing.assert_allclose(twice.rotations, once.rotations, atol=1e-10)


def test_dispersion_decreases(fitted):
    chain, fits = fitted
    ident = identify_chain(chain, fits)
    for m in range(chain.W.shape[1]):
        assert loading_dispersion(ident.W, m) < loading_dispersion(chain.W, m)


def test_signed_permutation_mode_preserves_reconstruction(fitted):
    chain, fits = fitted
    short = identify_chain(chain, fits)  # any chain will do; keep the brute force small
    ident = identify_chain(short, fits, mode="signed-permutation")
    np.testing.assert_allclose(ident.U @ ident.W.transpose(0, 1, 3, 2),
                               short.U @ short.W.transpose(0, 1, 3, 2), atol=1e-10)


def test_unify_timepoints(rng):
    W0 = rng.normal(size=(10, 2))
    Rs = [ortho_group.rvs(2, random_state=rng) for _ in range(4)]
    W = np.stack([W0] + [W0 @ R for R in Rs])
    U = rng.normal(size=(5, 6, 2))
    W_al, U_al, R = unify_timepoints(W, U)
    for m in range(5):
        np.testing.assert_allclose(W_al[m], W0, atol=1e-10)
        np.testing.assert_allclose(U_al[m] @ W_al[m].T, U[m] @ W[m].T, atol=1e-10)
    np.testing.assert_array_equal(R[0], np.eye(2))


def test_unknown_mode(fitted):
    chain, fits = fitted
    with pytest.raises(ValueError, match="unknown identification mode"):
        identify_chain(chain, fits, mode="varimax")
