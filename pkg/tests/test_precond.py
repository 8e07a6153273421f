"""Structured metric blocks: algebra, noise covariance, and the analytic
divergence term against finite differences."""

import numpy as np
import pytest

from oracles import fd_divergence, random_params

from ssm_sgmcmc.params import (
    BlockVec,
    coord_mask,
    constrain,
    cov_from_chol_prec,
    flatten,
    unconstrain,
)
from ssm_sgmcmc.precond import (
    _psi_gamma,
    apply,
    dense_block,
    identity_blocks,
    noise_factor,
    precondition,
)

FAMILIES = ["hmm", "arhmm", "lgssm", "slds"]


def _block_D_fn(params, name):
    """Dense metric of one block as a function of that block's free coords,
    other blocks held fixed."""
    u0 = unconstrain(params)
    mask = coord_mask(params)[name]

    def D_fn(vec):
        u = u0.copy()
        blk = u[name].copy()
        blk[mask] = vec
        u[name] = blk
        p = constrain(params.family, u)
        return dense_block(precondition(p), name, p)[0]

    return D_fn, u0[name][mask]


@pytest.mark.parametrize("family", FAMILIES)
def test_gamma_matches_fd_divergence(family, rng):
    params = random_params(family, rng)
    pre = precondition(params)
    for name in pre.ops:
        D_fn, vec0 = _block_D_fn(params, name)
        if len(vec0) == 0:
            continue
        fd = fd_divergence(D_fn, vec0)
        gam = dense_block(pre, name, params)[1]
        denom = max(1.0, np.max(np.abs(fd)))
        assert np.max(np.abs(gam - fd)) / denom < 1e-5, (family, name)


@pytest.mark.parametrize("family", FAMILIES)
def test_apply_matches_dense(family, rng):
    params = random_params(family, rng)
    pre = precondition(params)
    masks = coord_mask(params)
    g = BlockVec({k: rng.normal(size=v.shape) * masks[k]
                  for k, v in params.blocks().items()})
    out = apply(pre, g)
    for name in pre.ops:
        D = dense_block(pre, name, params)[0]
        if D.shape[0] == 0:
            continue
        assert np.max(np.abs(out[name][masks[name]]
                             - D @ g[name][masks[name]])) < 1e-12, name


@pytest.mark.parametrize("family", FAMILIES)
def test_noise_factor_squares_to_metric(family, rng):
    params = random_params(family, rng)
    pre = precondition(params)
    masks = coord_mask(params)
    for name in pre.ops:
        mask = masks[name]
        nf = int(mask.sum())
        if nf == 0:
            continue
        F = np.empty((nf, nf))
        for i in range(nf):
            e = BlockVec({k: np.zeros_like(v)
                          for k, v in params.blocks().items()})
            col = np.zeros(nf)
            col[i] = 1.0
            blk = e[name]
            blk[mask] = col
            F[:, i] = noise_factor(pre, e)[name][mask]
        D = dense_block(pre, name, params)[0]
        assert np.max(np.abs(F @ F.T - D)) < 1e-10, (family, name)


@pytest.mark.parametrize("family", FAMILIES)
def test_dense_metric_positive_definite(family, rng):
    params = random_params(family, rng)
    pre = precondition(params)
    for name in pre.ops:
        D = dense_block(pre, name, params)[0]
        if D.shape[0] == 0:
            continue
        assert np.max(np.abs(D - D.T)) < 1e-12
        assert np.min(np.linalg.eigvalsh(D)) > 0, (family, name)


def test_identity_blocks_are_identity(rng):
    params = random_params("lgssm", rng)
    pre = identity_blocks(params)
    g = BlockVec({k: rng.normal(size=v.shape)
                  for k, v in params.blocks().items()})
    out = apply(pre, g)
    nz = noise_factor(pre, g)
    for k in g:
        assert np.array_equal(out[k], g[k])
        assert np.array_equal(nz[k], g[k])
        assert np.all(pre.gamma[k] == 0)


def test_phi_metric_values(rng):
    params = random_params("hmm", rng)
    pre = precondition(params, nu_phi=1e-4)
    kind, payload = pre.ops["phi"]
    assert kind == "diag"
    assert np.array_equal(payload, params.phi + 1e-4)
    assert np.array_equal(pre.gamma["phi"], params.phi)


def test_mu_metric_is_state_covariance(rng):
    params = random_params("hmm", rng)
    pre = precondition(params)
    Sigma = cov_from_chol_prec(params.psi_sigma)
    assert np.allclose(pre.ops["mu"][1][0], Sigma, atol=1e-12)


def test_psi_gamma_hand_example():
    psi = np.array([[2.0, 0.0], [1.0, 3.0]])
    G = _psi_gamma(psi)
    # diag: psi_bb^2 + (d-1-b)/2 * psi_bb; off-diag: psi_ab (psi_bb + d - b)/2
    assert np.allclose(G, [[5.0, 0.0], [2.0, 9.0]])
    psi3 = np.array([[1.5, 0, 0], [0.5, 2.0, 0], [-0.3, 0.7, 1.1]])
    G3 = _psi_gamma(psi3)
    assert abs(G3[0, 0] - (1.5 ** 2 + 1.0 * 1.5)) < 1e-12
    assert abs(G3[1, 0] - 0.5 * 0.5 * (1.5 + 3)) < 1e-12
    assert abs(G3[2, 0] - 0.5 * (-0.3) * (1.5 + 3)) < 1e-12
    assert abs(G3[1, 1] - (4 + 0.5 * 2.0)) < 1e-12
    assert abs(G3[2, 1] - 0.5 * 0.7 * (2.0 + 2)) < 1e-12
    assert abs(G3[2, 2] - 1.1 ** 2) < 1e-12
    assert G3[0, 1] == 0 and G3[0, 2] == 0 and G3[1, 2] == 0


@pytest.mark.parametrize("m,n", [(3, 2), (2, 3), (2, 2)])
def test_emission_slab_shapes(m, n, rng):
    params = random_params("lgssm", rng, m=m, n=n)
    pre = precondition(params)
    D, gam = dense_block(pre, "C", params)
    nf = int(coord_mask(params)["C"].sum())
    assert D.shape == (nf, nf)
    assert np.all(gam == 0)
    if m > n:
        R = cov_from_chol_prec(params.psi_r)
        assert np.allclose(D, np.kron(R[n:, n:], np.eye(n)))
    if m == n:
        g = BlockVec({k: rng.normal(size=v.shape)
                      for k, v in params.blocks().items()})
        assert np.all(apply(pre, g)["C"] == 0)
        assert np.all(noise_factor(pre, g)["C"] == 0)


def test_ops_cover_block_order():
    rng = np.random.default_rng(0)
    for family in FAMILIES:
        params = random_params(family, rng)
        pre = precondition(params)
        assert tuple(pre.ops) == tuple(params.blocks())
