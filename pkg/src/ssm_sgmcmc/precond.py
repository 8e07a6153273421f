"""Structured Riemannian metrics for the preconditioned samplers.

Each parameter block gets its own positive-definite metric D chosen so that
D times the gradient approximates a natural-gradient step while the matrix
stays cheap to apply and to factor:

* ``phi``       diag(phi) + nu            (softened Dirichlet-like metric)
* ``mu``        Sigma_k per state
* ``A``         G -> Q_k G                (left multiplication)
* ``psi_*``     per column b, half the trailing submatrix Lambda[b:, b:]
* ``C``         left multiplication of the non-frozen slab by the matching
                block of R

The Langevin correction term Gamma_i = sum_j dD_ij/dtheta_j is analytic:
nonzero only for ``phi`` (Gamma = phi) and the ``psi`` blocks, whose metric
depends on its own coordinates.  Cross-block entries of D are identically
zero, so blockwise divergences are the whole story.
"""

import numpy as np

from ssm_sgmcmc.params import (
    BlockVec,
    block_order,
    chol_cov_from_chol_prec,
    cov_from_chol_prec,
    zero_grad,
)

NU_PHI_DEFAULT = 1e-4


class Preconditioner:
    """Per-block metric operators plus the analytic correction term."""

    def __init__(self, ops, gamma):
        self.ops = ops          # block name -> (kind, payload)
        self.gamma = gamma      # BlockVec


def identity_blocks(params):
    """The trivial metric: D = I, Gamma = 0 on every block."""
    ops = {name: ("identity", None) for name in block_order(params.family)}
    return Preconditioner(ops, zero_grad(params))


def _psi_gamma(psi):
    d = psi.shape[-1]
    b = np.arange(d)
    dg = np.diagonal(psi, axis1=-2, axis2=-1)
    G = 0.5 * psi * (dg[..., None, :] + (d - b))
    G[..., b, b] = dg ** 2 + 0.5 * (d - 1 - b) * dg
    return G


def _psi_chols(lam):
    d = lam.shape[-1]
    return [np.linalg.cholesky(0.5 * lam[..., b:, b:]) for b in range(d)]


def precondition(params, nu_phi=NU_PHI_DEFAULT):
    """Build the structured metric at the current parameter values."""
    fam = params.family
    ops = {}
    gamma = zero_grad(params)
    if fam in ("hmm", "arhmm", "slds"):
        ops["phi"] = ("diag", params.phi + nu_phi)
        gamma["phi"] = params.phi.copy()
    if fam == "hmm":
        Sigma = cov_from_chol_prec(params.psi_sigma)
        ops["mu"] = ("state_dense", (Sigma, chol_cov_from_chol_prec(
            params.psi_sigma)))
        lam = params.psi_sigma @ np.swapaxes(params.psi_sigma, -1, -2)
        ops["psi_sigma"] = ("psi", (lam, _psi_chols(lam)))
        gamma["psi_sigma"] = _psi_gamma(params.psi_sigma)
    else:
        Q = cov_from_chol_prec(params.psi_q)
        ops["A"] = ("kron_left", (Q, chol_cov_from_chol_prec(params.psi_q)))
        lam_q = params.psi_q @ np.swapaxes(params.psi_q, -1, -2)
        ops["psi_q"] = ("psi", (lam_q, _psi_chols(lam_q)))
        gamma["psi_q"] = _psi_gamma(params.psi_q)
    if fam in ("lgssm", "slds"):
        R = cov_from_chol_prec(params.psi_r)
        m, n = params.C.shape
        r = min(m, n)
        slab = R[n:, n:] if m > n else R
        ops["C"] = ("slab", (slab, np.linalg.cholesky(slab) if m != n
                             else None, m, n, r))
        lam_r = params.psi_r @ params.psi_r.T
        ops["psi_r"] = ("psi", (lam_r, _psi_chols(lam_r)))
        gamma["psi_r"] = _psi_gamma(params.psi_r)
    return Preconditioner(ops, gamma)


def _apply_psi_chol(chols, g):
    out = np.zeros_like(g)
    for b, L in enumerate(chols):
        out[..., b:, b] = np.einsum("...ij,...j->...i", L, g[..., b:, b])
    return out


def _apply_block(kind, payload, g):
    if kind == "identity":
        return g.copy()
    if kind == "diag":
        return payload * g
    if kind == "state_dense":
        return np.einsum("kij,kj->ki", payload[0], g)
    if kind == "kron_left":
        mats = payload[0]
        if mats.ndim == 3:
            return np.einsum("kij,kjl->kil", mats, g)
        return mats @ g
    if kind == "psi":
        lam = payload[0]
        out = np.zeros_like(g)
        d = g.shape[-1]
        for b in range(d):
            out[..., b:, b] = 0.5 * np.einsum(
                "...ij,...j->...i", lam[..., b:, b:], g[..., b:, b])
        return out
    if kind == "slab":
        slab, _, m, n, r = payload
        out = np.zeros_like(g)
        if m > n:
            out[n:, :] = slab @ g[n:, :]
        elif n > m:
            out[:, m:] = slab @ g[:, m:]
        return out
    raise ValueError(f"unknown preconditioner kind {kind!r}")


def _noise_block(kind, payload, z):
    if kind == "identity":
        return z.copy()
    if kind == "diag":
        return np.sqrt(payload) * z
    if kind == "state_dense":
        return np.einsum("kij,kj->ki", payload[1], z)
    if kind == "kron_left":
        chols = payload[1]
        if chols.ndim == 3:
            return np.einsum("kij,kjl->kil", chols, z)
        return chols @ z
    if kind == "psi":
        return _apply_psi_chol(payload[1], z)
    if kind == "slab":
        _, chol, m, n, r = payload
        out = np.zeros_like(z)
        if m > n:
            out[n:, :] = chol @ z[n:, :]
        elif n > m:
            out[:, m:] = chol @ z[:, m:]
        return out
    raise ValueError(f"unknown preconditioner kind {kind!r}")


def apply(pre, g):
    """D g, blockwise."""
    return BlockVec({k: _apply_block(*pre.ops[k], g[k]) for k in g})


def noise_factor(pre, z):
    """sqrt(D) z for standard-normal z of the gradient layout."""
    return BlockVec({k: _noise_block(*pre.ops[k], z[k]) for k in z})


# ---------------------------------------------------------------------------
# dense materialization (oracle support; small blocks only)


def dense_block(pre, name, params):
    """Materialize one block's metric over its free coordinates.

    Returns (D, gamma) with coordinates ordered exactly as the row-major
    flatten of the block's free-coordinate mask.
    """
    from scipy.linalg import block_diag

    kind, payload = pre.ops[name]
    blk = params.blocks()[name]
    if kind == "identity":
        n_free = _n_free(name, blk, params)
        return np.eye(n_free), np.zeros(n_free)
    if kind == "diag":
        return np.diag(payload.ravel()), pre.gamma[name].ravel()
    if kind == "state_dense":
        return block_diag(*payload[0]), np.zeros(blk.size)
    if kind == "kron_left":
        mats = payload[0]
        ncol = blk.shape[-1]
        if mats.ndim == 3:
            D = block_diag(*[np.kron(M, np.eye(ncol)) for M in mats])
        else:
            D = np.kron(mats, np.eye(ncol))
        return D, np.zeros(D.shape[0])
    if kind == "psi":
        lam = payload[0]
        d = lam.shape[-1]
        rows, cols = np.tril_indices(d)
        same_col = cols[:, None] == cols[None, :]
        if lam.ndim == 3:
            D = block_diag(*[0.5 * L[np.ix_(rows, rows)] * same_col
                             for L in lam])
            gam = np.concatenate([G[rows, cols] for G in pre.gamma[name]])
        else:
            D = 0.5 * lam[np.ix_(rows, rows)] * same_col
            gam = pre.gamma[name][rows, cols]
        return D, gam
    if kind == "slab":
        slab, _, m, n, r = payload
        if m > n:
            D = np.kron(slab, np.eye(n))
        elif n > m:
            D = np.kron(slab, np.eye(n - m))
        else:
            D = np.zeros((0, 0))
        return D, np.zeros(D.shape[0])
    raise ValueError(f"unknown preconditioner kind {kind!r}")


def _n_free(name, blk, params):
    from ssm_sgmcmc.params import coord_mask

    return int(coord_mask(params)[name].sum())
