import numpy as np
import pytest

from ssm_sgmcmc import (
    default_p0,
    init_params,
    make_synthetic_star,
    simulate,
    stationary_dist,
    steady_state_cov,
)
from ssm_sgmcmc.models import kmeans, stack_lags


def test_stationary_dist_symmetric():
    Pi = np.array([[0.9, 0.1], [0.1, 0.9]])
    assert np.max(np.abs(stationary_dist(Pi) - 0.5)) < 1e-10


def test_stationary_dist_asymmetric():
    Pi = np.array([[0.5, 0.5], [0.25, 0.75]])
    pi = stationary_dist(Pi)
    assert np.max(np.abs(pi - np.array([1 / 3, 2 / 3]))) < 1e-10
    assert np.max(np.abs(pi @ Pi - pi)) < 1e-10


def test_steady_state_cov_scalar():
    V = steady_state_cov(np.array([[0.5]]), np.array([[1.0]]))
    assert abs(V[0, 0] - 4.0 / 3.0) < 1e-10


def test_steady_state_cov_unstable_fallback():
    V = steady_state_cov(1.2 * np.eye(2), np.eye(2))
    assert np.array_equal(V, 10.0 * np.eye(2))


def test_default_p0_shapes():
    p = make_synthetic_star("lgssm")
    mu0, V0 = default_p0(p)
    assert mu0.shape == (2,) and V0.shape == (2, 2)
    # fixed point of the covariance recursion
    assert np.max(np.abs(V0 - (p.Q + p.A @ V0 @ p.A.T))) < 1e-10
    ps = make_synthetic_star("slds")
    pi0, mu0, V0 = default_p0(ps)
    assert pi0.shape == (2,) and np.linalg.eigvalsh(V0).min() > 0
    ph = make_synthetic_star("hmm")
    pi0 = default_p0(ph)
    assert pi0.shape == (8,) and abs(pi0.sum() - 1.0) < 1e-10


@pytest.mark.parametrize("family", ["hmm", "arhmm", "lgssm", "slds"])
def test_simulate_deterministic(family):
    p = make_synthetic_star(family)
    lat1, obs1 = simulate(p, 50, seed=7)
    lat2, obs2 = simulate(p, 50, seed=7)
    assert np.array_equal(obs1, obs2)
    if family == "slds":
        assert np.array_equal(lat1[0], lat2[0])
        assert np.array_equal(lat1[1], lat2[1])
    else:
        assert np.array_equal(lat1, lat2)
    _, obs3 = simulate(p, 50, seed=8)
    assert not np.array_equal(obs1, obs3)


def test_simulate_rejects_empty():
    with pytest.raises(ValueError):
        simulate(make_synthetic_star("lgssm"), 0, seed=0)


def test_simulate_arhmm_state_frequencies():
    p = make_synthetic_star("arhmm")
    z, _ = simulate(p, 20000, seed=1)
    freq = np.bincount(z, minlength=2) / len(z)
    assert np.max(np.abs(freq - 0.5)) < 0.02


def test_simulate_lgssm_matches_steady_state():
    p = make_synthetic_star("lgssm")
    x, obs = simulate(p, 40000, seed=2)
    _, V0 = default_p0(p)
    emp = x.T @ x / len(x)
    assert np.max(np.abs(emp - V0)) < 0.01
    # observation variance: C V C^T + R
    emp_y = obs.T @ obs / len(obs)
    assert np.max(np.abs(emp_y - (p.C @ V0 @ p.C.T + p.R))) < 0.05


def test_make_synthetic_star_values():
    p = make_synthetic_star("arhmm")
    assert np.max(np.abs(p.Pi - np.array([[0.1, 0.9], [0.9, 0.1]]))) < 1e-12
    c = 0.9 * np.cos(np.pi / 4)
    assert abs(p.A[0, 0, 0] - c) < 1e-12
    assert abs(p.A[0, 0, 1] - c) < 1e-12  # -0.9*sin(-pi/4)
    assert np.max(np.abs(p.Q - 0.1 * np.eye(2))) < 1e-12
    pl = make_synthetic_star("lgssm")
    assert np.max(np.abs(pl.R - np.eye(2))) < 1e-12
    assert np.array_equal(pl.C, np.eye(2))
    ph = make_synthetic_star("hmm8")
    assert ph.K == 8 and ph.mu.shape == (8, 2)
    assert np.all(ph.phi > 0)  # zero transition entries floored
    assert np.max(np.abs(ph.Sigma[0] - 20.0 * np.eye(2))) < 1e-10
    with pytest.raises(ValueError):
        make_synthetic_star("nope")


def test_rotation_dynamics_opposite_angles():
    p = make_synthetic_star("arhmm")
    # both regimes are 0.9-scaled rotations, one clockwise, one counter
    for k, ang in [(0, -np.pi / 4), (1, np.pi / 4)]:
        R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        assert np.max(np.abs(p.A[k] - 0.9 * R)) < 1e-12


def test_stack_lags_zero_padding_and_context():
    obs = np.array([[1.0], [2.0], [3.0]])
    out = stack_lags(obs, 2)
    assert np.array_equal(out, [[0, 0], [1, 0], [2, 1]])
    out_ctx = stack_lags(obs, 2, context=np.array([[9.0], [8.0]]))
    assert np.array_equal(out_ctx, [[8, 9], [1, 8], [2, 1]])
    # multivariate: most recent lag occupies the leading columns
    obs2 = np.array([[1.0, 10.0], [2.0, 20.0]])
    out2 = stack_lags(obs2, 1)
    assert np.array_equal(out2, [[0, 0], [1, 10]])


def test_kmeans_recovers_separated_clusters(rng):
    centers = np.array([[0.0, 0.0], [10.0, 10.0], [-10.0, 5.0]])
    X = np.vstack([c + 0.1 * rng.standard_normal((40, 2)) for c in centers])
    labels, fit = kmeans(X, 3, seed=0)
    # each true cluster is labeled uniformly
    for i in range(3):
        blk = labels[40 * i:40 * (i + 1)]
        assert len(np.unique(blk)) == 1
    order = np.argsort(fit[:, 0])
    assert np.max(np.abs(fit[order] - centers[np.argsort(centers[:, 0])])) < 0.1


def test_kmeans_too_many_clusters():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 5, seed=0)


@pytest.mark.parametrize("family", ["hmm", "arhmm", "lgssm", "slds"])
def test_init_params_valid_and_deterministic(family):
    p = make_synthetic_star(family)
    _, obs = simulate(p, 400, seed=3)
    K = getattr(p, "K", 1)
    a = init_params(family, obs, K, seed=11)
    b = init_params(family, obs, K, seed=11)
    for name, arr in a.blocks().items():
        assert np.array_equal(arr, b.blocks()[name])
    assert a.family == family
    if family in ("hmm", "arhmm", "slds"):
        assert a.phi.shape == (K, K) and np.all(a.phi > 0)
    if family in ("lgssm", "slds"):
        assert np.array_equal(a.C[:2, :2], np.eye(2))


def test_init_params_slds_needs_small_latent():
    _, obs = simulate(make_synthetic_star("slds"), 50, seed=3)
    with pytest.raises(ValueError):
        init_params("slds", obs, 2, seed=0, n=5)
