"""Decay-constant bounds, adaptive buffer search, and empirical error
curves."""

import numpy as np
import pytest

from ssm_sgmcmc.buffer import (
    adaptive_buffer,
    dobrushin_bound,
    empirical_grad_error_curve,
    extrapolate_buffer,
    lgssm_lipschitz,
)
from ssm_sgmcmc.estimators import (
    buffered_gradient,
    full_gradient,
    sample_subsequence,
    subsequence_from_start,
)
from ssm_sgmcmc.models import default_p0, make_synthetic_star, simulate
from ssm_sgmcmc.params import (
    HMMParams,
    LGSSMParams,
    coord_mask,
    flatten,
    identity_C,
)


def _rot(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# discrete-chain contraction bound

def test_dobrushin_two_state_value():
    out = dobrushin_bound(np.array([[0.1, 0.9], [0.9, 0.1]]))
    assert abs(out.L - 8.0 / 9.0) < 1e-12
    assert out.L_f == out.L_b == out.L
    assert out.source == "dobrushin" and not out.no_contraction


def test_dobrushin_uniform_rows_zero():
    assert dobrushin_bound(np.full((3, 3), 1.0 / 3.0)).L == 0.0
    # identical but non-uniform rows also forget the state in one step
    out = dobrushin_bound(np.array([[0.3, 0.7], [0.3, 0.7]]))
    assert out.L == 0.0 and not out.no_contraction


def test_dobrushin_zero_entry_flagged():
    out = dobrushin_bound(np.array([[1.0, 0.0], [0.5, 0.5]]))
    assert out.L == 1.0 and out.no_contraction


def test_dobrushin_range_and_zero_iff_identical_rows(rng):
    for _ in range(30):
        K = int(rng.integers(2, 6))
        Pi = rng.dirichlet(np.ones(K) * 2.0, size=K)
        out = dobrushin_bound(Pi)
        assert 0.0 <= out.L <= 1.0
        if np.max(np.abs(Pi - Pi[0])) > 1e-9:
            assert out.L > 0.0


def test_dobrushin_validation():
    with pytest.raises(ValueError):
        dobrushin_bound(np.ones((2, 3)))
    with pytest.raises(ValueError):
        dobrushin_bound(np.array([[0.5, 0.6], [0.5, 0.5]]))


# ---------------------------------------------------------------------------
# linear-Gaussian contraction bound

def test_lgssm_star_constants():
    out = lgssm_lipschitz(make_synthetic_star("lgssm"))
    assert abs(out.L_f - 0.7 / 1.1) < 1e-10
    assert abs(out.L_b - out.L_f) < 1e-10
    assert out.source == "lgssm" and not out.no_contraction
    assert out.L_U > 0


def test_lgssm_zero_dynamics():
    params = LGSSMParams(A=np.zeros((2, 2)), psi_q=np.eye(2),
                         C=identity_C(2, 2), psi_r=np.eye(2))
    out = lgssm_lipschitz(params)
    assert out.L_f == 0.0 and out.L_b == 0.0


def test_lgssm_contracts_despite_expanding_dynamics():
    params = LGSSMParams(A=1.2 * _rot(0.3), psi_q=np.eye(2),
                         C=identity_C(2, 2), psi_r=np.eye(2))
    out = lgssm_lipschitz(params)
    assert abs(out.L_f - 0.6) < 1e-12
    assert not out.no_contraction


def test_lgssm_no_contraction_flag():
    params = LGSSMParams(A=5.0 * np.eye(2), psi_q=10.0 * np.eye(2),
                         C=identity_C(2, 2), psi_r=np.eye(2))
    out = lgssm_lipschitz(params)
    assert out.L >= 1.0 and out.no_contraction


def test_lgssm_smoothness_constant_matches_explicit_kron(rng):
    from oracles import random_params

    params = random_params("lgssm", rng, n=2, m=3)
    A, C = params.A, params.C
    Qi = params.psi_q @ params.psi_q.T
    Ri = params.psi_r @ params.psi_r.T
    I2, I3 = np.eye(2), np.eye(3)
    mats = [np.kron(I2, Qi), np.kron(I2, Qi @ A),
            np.kron(params.psi_q, I2), np.kron(params.psi_q @ A, I2),
            np.kron(params.psi_q, A), np.kron(params.psi_q @ A, A),
            np.kron(I3, Ri), np.kron(I3, Ri @ C),
            np.kron(params.psi_r @ C, C)]
    expect = max(np.linalg.norm(M, 2) for M in mats)
    out = lgssm_lipschitz(params)
    assert abs(out.L_U - expect) < 1e-10 * max(1.0, expect)


def test_lgssm_backward_general_form(rng):
    # non-commuting A, Q exercises the weaker backward bound
    A = np.array([[0.8, 0.5], [0.0, 0.3]])
    psi_q = np.linalg.cholesky(np.linalg.inv(np.diag([1.0, 2.0])))
    params = LGSSMParams(A=A, psi_q=psi_q, C=identity_C(2, 2),
                         psi_r=np.eye(2))
    out = lgssm_lipschitz(params)
    Q = np.diag([1.0, 2.0])
    M = Q @ A.T @ np.linalg.inv(Q) @ A + Q @ np.linalg.inv(np.eye(2)) @ \
        np.eye(2)
    expect = np.linalg.norm(A @ np.linalg.inv(M), 2)
    assert abs(out.L_b - expect) < 1e-12
    assert abs(out.L_b - out.L_f) > 1e-6


def test_lgssm_constants_rotation_invariant():
    # the rotated system leaves the identifiable class, so feed the raw
    # matrices through a namespace rather than the validated container
    from types import SimpleNamespace

    A = np.array([[0.8, 0.1], [0.0, 0.3]])
    base = LGSSMParams(A=A, psi_q=np.eye(2) * 2.0, C=identity_C(2, 2),
                       psi_r=np.eye(2))
    M = _rot(0.7)
    rot = SimpleNamespace(A=M @ A @ M.T, psi_q=np.eye(2) * 2.0,
                          C=base.C @ M.T, psi_r=np.eye(2))
    a, b = lgssm_lipschitz(base), lgssm_lipschitz(rot)
    assert abs(a.L_f - b.L_f) < 1e-8
    assert abs(a.L_b - b.L_b) < 1e-8
    assert abs(a.L_U - b.L_U) < 1e-8


# ---------------------------------------------------------------------------
# adaptive buffer search

def _iid_like_hmm():
    return HMMParams(phi=np.ones((2, 2)), mu=np.zeros((2, 2)),
                     psi_sigma=np.tile(np.eye(2), (2, 1, 1)))


def test_adaptive_buffer_iid_like_returns_zero(rng):
    params = _iid_like_hmm()
    obs = rng.normal(size=(60, 2))
    B, flag = adaptive_buffer(params, obs, S=4, epsilon=1e-8, B_star=10,
                              N_S=16, seed=0)
    assert B == 0 and not flag


def test_adaptive_buffer_infinite_tolerance():
    params = _iid_like_hmm()
    obs = np.zeros((20, 2))
    assert adaptive_buffer(params, obs, 4, np.inf) == (0, False)


def test_adaptive_buffer_validation():
    params = _iid_like_hmm()
    obs = np.zeros((20, 2))
    with pytest.raises(ValueError):
        adaptive_buffer(params, obs, 4, 0.0)
    with pytest.raises(ValueError):
        adaptive_buffer(params, obs, 4, 1e-3, N_S=0)


def test_adaptive_buffer_recheck_with_fresh_subsequences():
    params = make_synthetic_star("arhmm")
    _, obs = simulate(params, 300, seed=31)
    scale = np.linalg.norm(flatten(full_gradient(params, obs),
                                   coord_mask(params)))
    eps = 1e-3 * scale
    B_star = 40
    # the distance distribution over starts is heavy-tailed (a few windows
    # sit on regime ambiguities), so the criterion needs a real sample size
    B, flag = adaptive_buffer(params, obs, S=4, epsilon=eps, B_star=B_star,
                              N_S=1200, seed=5)
    assert not flag and 4 < B < 15
    # independent re-estimate of the criterion at the returned B
    rng = np.random.default_rng(99)
    p0 = default_p0(params)
    T = obs.shape[0]
    dists = []
    for _ in range(2000):
        start = int(sample_subsequence(T, 4, 0, "uniform", rng).core.start)
        sub_b = subsequence_from_start(T, 4, B, "uniform", start)
        sub_r = subsequence_from_start(T, 4, B_star, "uniform", start)
        gb = flatten(buffered_gradient(params, obs, sub_b, p0=p0),
                     coord_mask(params))
        gr = flatten(buffered_gradient(params, obs, sub_r, p0=p0),
                     coord_mask(params))
        dists.append(np.linalg.norm(gb - gr))
    assert np.mean(dists) < eps


def test_adaptive_buffer_monotone_in_tolerance():
    params = make_synthetic_star("arhmm")
    _, obs = simulate(params, 200, seed=32)
    scale = np.linalg.norm(flatten(full_gradient(params, obs),
                                   coord_mask(params)))
    sizes = []
    for frac in (4e-1, 1e-1, 2.5e-2, 6e-3):
        B, _ = adaptive_buffer(params, obs, S=4, epsilon=frac * scale,
                               B_star=30, N_S=32, seed=7)
        sizes.append(B)
    assert sizes == sorted(sizes)


def test_adaptive_buffer_flags_unreachable_tolerance():
    params = make_synthetic_star("arhmm")
    _, obs = simulate(params, 120, seed=33)
    B, flag = adaptive_buffer(params, obs, S=4, epsilon=1e-14, B_star=3,
                              N_S=8, seed=1)
    assert B == 3 and flag


# ---------------------------------------------------------------------------
# extrapolation

def test_extrapolate_buffer_values():
    assert extrapolate_buffer(5, 1e-2, 1e-2, 0.5) == 5
    assert extrapolate_buffer(5, 8e-2, 1e-2, 0.5) == 8
    assert extrapolate_buffer(4, 1e-1, 1e-2, 8.0 / 9.0) == 24
    assert extrapolate_buffer(1, 1e-3, 8e-3, 0.5) == 0


def test_extrapolate_buffer_validation():
    for bad in ((5, 1e-2, 1e-2, 1.0), (5, 1e-2, 1e-2, 0.0),
                (5, 0.0, 1e-2, 0.5), (5, 1e-2, -1.0, 0.5)):
        with pytest.raises(ValueError):
            extrapolate_buffer(*bad)


# ---------------------------------------------------------------------------
# empirical error curves

def test_error_curve_zero_when_buffer_covers_sequence():
    params = make_synthetic_star("arhmm")
    _, obs = simulate(params, 30, seed=34)
    rows = empirical_grad_error_curve(params, obs, [5, 10], [30],
                                      n_trials=10, seed=0)
    for row in rows:
        assert row["mean_err"] < 1e-10


def test_error_curve_exhaustive_mode_deterministic():
    params = make_synthetic_star("arhmm")
    _, obs = simulate(params, 40, seed=35)
    a = empirical_grad_error_curve(params, obs, [5], [0, 2], n_trials=None,
                                   seed=0)
    b = empirical_grad_error_curve(params, obs, [5], [0, 2], n_trials=None,
                                   seed=123)
    assert a == b
    assert all(r["n_trials"] == 36 for r in a)
    assert a[1]["mean_err"] < a[0]["mean_err"]


def test_error_curve_inverse_s_decay():
    params = make_synthetic_star("arhmm")
    _, obs = simulate(params, 1000, seed=36)
    rows = empirical_grad_error_curve(params, obs, [4, 16, 64], [0],
                                      n_trials=150, seed=2)
    S = np.array([r["S"] for r in rows], dtype=float)
    err = np.array([r["mean_err"] for r in rows])
    slope = np.polyfit(np.log(S), np.log(err), 1)[0]
    assert -1.3 < slope < -0.7


def test_error_curve_geometric_decay_in_buffer():
    params = make_synthetic_star("lgssm")
    _, obs = simulate(params, 400, seed=37)
    B_list = [0, 2, 4, 6, 8, 10, 12]
    rows = empirical_grad_error_curve(params, obs, [8], B_list,
                                      n_trials=100, seed=3)
    err = np.array([r["mean_err"] for r in rows])
    assert err[-1] <= err[0]
    logs = np.log(err)
    slope = np.polyfit(B_list, logs, 1)[0]
    r2 = np.corrcoef(B_list, logs)[0, 1] ** 2
    assert slope < 0 and r2 >= 0.8
