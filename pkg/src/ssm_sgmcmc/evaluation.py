"""Experiment metrics: heldout and predictive loglikelihood, label-aligned
parameter error, kernelized Stein discrepancy, clustering agreement, and
latent-path error.

Everything here is a pure function of parameters/samples and data; metric
CSV plumbing lives with the command-line layer.
"""

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment

from .messages import (
    hmm_forward_backward,
    hmm_marginal_loglik,
    kalman_forward,
    lgssm_marginal_loglik,
)
from .models import default_p0, stack_lags
from .params import block_order, coord_mask, cov_from_chol_prec, flatten


def heldout_loglik(params, obs, p0=None):
    """Exact marginal loglikelihood of a heldout sequence.

    Only the families with closed-form message passing are supported; the
    switching model's marginal is intractable and callers should use
    ``slds_em_lower_bound`` instead.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    if params.family == "slds":
        raise ValueError("marginal loglik is intractable for slds; "
                         "use slds_em_lower_bound")
    if p0 is None:
        p0 = default_p0(params)
    if params.family in ("hmm", "arhmm"):
        return hmm_marginal_loglik(params, obs, p0)
    return lgssm_marginal_loglik(params, obs, p0)


def _state_log_norm(obs_t, means, psi):
    # log N(y; mean_k, (psi_k psi_k')^{-1}) for each state, via the
    # Cholesky factor of the precision
    d = obs_t.shape[-1]
    resid = obs_t[None, :] - means
    z = np.einsum("kij,kj->ki", np.swapaxes(psi, 1, 2), resid)
    logdet = np.sum(np.log(np.abs(np.diagonal(psi, axis1=1, axis2=2))),
                    axis=1)
    return -0.5 * d * np.log(2.0 * np.pi) + logdet - 0.5 * np.sum(z * z,
                                                                  axis=1)


def _logsumexp(v):
    m = np.max(v)
    return m + np.log(np.sum(np.exp(v - m)))


def predictive_k_step(params, obs, k, p0=None):
    """Summed k-step-ahead predictive loglikelihood.

    Returns sum over t of log p(y_{t+k} | y_{0..t}); at k=1 this
    telescopes to the marginal loglikelihood minus the first prediction
    term.  Autoregressive emissions tie each step to the previous
    observations, so only k=1 is defined there; the switching family has
    no tractable predictive.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError("k must be a positive integer")
    if params.family == "slds":
        raise ValueError("predictive loglik is intractable for slds")
    if params.family == "arhmm" and k != 1:
        raise ValueError("autoregressive emissions define only k=1 "
                         "prediction")
    if p0 is None:
        p0 = default_p0(params)
    T = obs.shape[0]
    if T <= k:
        raise ValueError("sequence shorter than the prediction horizon")

    if params.family in ("hmm", "arhmm"):
        msgs = hmm_forward_backward(params, obs, p0)
        Pik = np.linalg.matrix_power(params.Pi, k)
        if params.family == "arhmm":
            ybar = stack_lags(obs, params.p)
        total = 0.0
        for t in range(T - k):
            w = np.exp(msgs.log_alpha[t]) @ Pik
            if params.family == "hmm":
                means = params.mu
                psi = params.psi_sigma
            else:
                means = np.einsum("kij,j->ki", params.A, ybar[t + k])
                psi = params.psi_q
            lp = _state_log_norm(obs[t + k], means, psi)
            total += _logsumexp(np.log(w) + lp)
        return float(total)

    # linear-Gaussian: push the filtered state k steps forward
    fwd = kalman_forward(params, obs, p0)
    A, C = params.A, params.C
    Q = cov_from_chol_prec(params.psi_q)
    R = cov_from_chol_prec(params.psi_r)
    total = 0.0
    for t in range(T - k):
        P = np.linalg.inv(fwd.L_alpha[t])
        m = P @ fwd.h_alpha[t]
        for _ in range(k):
            m = A @ m
            P = A @ P @ A.T + Q
        mean_y = C @ m
        cov_y = C @ P @ C.T + R
        resid = obs[t + k] - mean_y
        L = np.linalg.cholesky(cov_y)
        z = np.linalg.solve(L, resid)
        total += (-0.5 * len(resid) * np.log(2.0 * np.pi)
                  - np.sum(np.log(np.diag(L))) - 0.5 * np.dot(z, z))
    return float(total)


# ---------------------------------------------------------------------------
# label-aligned parameter error

def constrained_blocks(params):
    """Derived constrained quantities, keyed by their conventional names."""
    fam = params.family
    if fam == "hmm":
        return {"Pi": params.Pi, "mu": params.mu,
                "Sigma": cov_from_chol_prec(params.psi_sigma)}
    if fam == "arhmm":
        return {"Pi": params.Pi, "A": params.A,
                "Q": cov_from_chol_prec(params.psi_q)}
    if fam == "lgssm":
        return {"A": params.A, "Q": cov_from_chol_prec(params.psi_q),
                "C": params.C, "R": cov_from_chol_prec(params.psi_r)}
    return {"Pi": params.Pi, "A": params.A,
            "Q": cov_from_chol_prec(params.psi_q),
            "C": params.C, "R": cov_from_chol_prec(params.psi_r)}


def _permute_block(name, arr, perm):
    if name == "Pi":
        return arr[np.ix_(perm, perm)]
    if arr.shape and arr.shape[0] == len(perm):
        return arr[list(perm)]
    return arr


_SHARED_BLOCKS = ("C", "R")


def _mse_under(est_blocks, truth_blocks, perm):
    out = {}
    for name, truth in truth_blocks.items():
        est = est_blocks[name]
        if perm is not None and name not in _SHARED_BLOCKS:
            est = _permute_block(name, est, perm)
        out[name] = float(np.mean((est - truth) ** 2))
    return out


def param_mse_aligned(est, truth):
    """Per-block mean squared error after aligning latent-state labels.

    Error is measured on the derived constrained quantities (transition
    matrix, per-state means/dynamics/covariances, emission parameters),
    with one label permutation applied consistently to every per-state
    block and to both axes of the transition matrix.  Exhaustive search
    up to 8 states, assignment matching above that.

    Returns
    -------
    (mse, perm) : dict block -> float, and the tuple mapping truth labels
        to estimate labels (empty for label-free families).
    """
    if est.family != truth.family:
        raise ValueError("families differ")
    return aligned_block_mse(constrained_blocks(est),
                             constrained_blocks(truth))


def aligned_block_mse(est_blocks, truth_blocks):
    """As :func:`param_mse_aligned`, but on already-derived block dicts.

    Lets callers align quantities that are not a params object, e.g. a
    running average of posterior samples.
    """
    for name in truth_blocks:
        if est_blocks[name].shape != truth_blocks[name].shape:
            raise ValueError(f"shape mismatch in block '{name}'")
    K = truth_blocks["Pi"].shape[0] if "Pi" in truth_blocks else None
    if K is None:
        return _mse_under(est_blocks, truth_blocks, None), ()
    if K <= 8:
        best = None
        for perm in itertools.permutations(range(K)):
            mse = _mse_under(est_blocks, truth_blocks, perm)
            total = sum(mse.values())
            if best is None or total < best[0] - 1e-15:
                best = (total, perm, mse)
        return best[2], best[1]
    # large K: match states by their per-state blocks alone
    cost = np.zeros((K, K))
    for name, truth_b in truth_blocks.items():
        if name in _SHARED_BLOCKS or name == "Pi":
            continue
        eb = est_blocks[name].reshape(K, -1)
        tb = truth_b.reshape(K, -1)
        cost += np.mean((eb[:, None, :] - tb[None, :, :]) ** 2, axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = tuple(int(rows[np.argwhere(cols == j)[0, 0]]) for j in range(K))
    return _mse_under(est_blocks, truth_blocks, perm), perm


# ---------------------------------------------------------------------------
# kernelized Stein discrepancy

def imq_kernel(x, y):
    """Inverse-multiquadric kernel (1 + |x-y|^2)^(-1/2)."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float((1.0 + np.dot(d.ravel(), d.ravel())) ** -0.5)


def _exp_coord_flags(params):
    # free coordinates living on (0, inf): gate weights and the diagonals
    # of Cholesky blocks
    flags = {}
    for name in block_order(params.family):
        arr = getattr(params, name)
        if name == "phi":
            flags[name] = np.ones_like(arr, dtype=float)
        elif name.startswith("psi"):
            d = arr.shape[-1]
            flags[name] = np.broadcast_to(np.eye(d), arr.shape).copy()
        else:
            flags[name] = np.zeros_like(arr, dtype=float)
    return flags


def _block_ids(params, order):
    ids = {name: np.full(getattr(params, name).shape, float(i))
           for i, name in enumerate(order)}
    return ids


def ksd_imq(samples, grad_fn):
    """Per-block kernelized Stein discrepancy of posterior samples.

    Scores are taken in constrained space: gradients from ``grad_fn``
    (which returns an ascent gradient with respect to the unconstrained
    coordinates) are chain-ruled onto the positive coordinates, so the
    discrepancy targets the posterior density over the parameters
    themselves.  Each coordinate contributes a Stein-kernel pair sum; a
    block's value adds the per-coordinate square roots.

    Parameters
    ----------
    samples : sequence of ModelParams (>= 2)
    grad_fn : callable params -> gradient blocks

    Returns
    -------
    dict block name -> KSD value
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    masks = coord_mask(samples[0])
    order = block_order(samples[0].family)
    exp_flags = flatten(_exp_coord_flags(samples[0]), masks) > 0.5
    ids = flatten(_block_ids(samples[0], order), masks).astype(int)
    X = np.stack([flatten({n: getattr(p, n) for n in order}, masks)
                  for p in samples])
    S = np.empty_like(X)
    for i, p in enumerate(samples):
        g = flatten(grad_fn(p), masks)
        S[i] = g
        S[i, exp_flags] = (g[exp_flags] - 1.0) / X[i, exp_flags]
    n, P = X.shape
    r2 = np.zeros((n, n))
    for d in range(P):
        U = X[:, d, None] - X[None, :, d]
        r2 += U * U
    base = 1.0 + r2
    k = base ** -0.5
    b32 = base ** -1.5
    b52 = base ** -2.5
    out = {name: 0.0 for name in order}
    for d in range(P):
        U = X[:, d, None] - X[None, :, d]
        Sd = S[:, d]
        k0 = (np.outer(Sd, Sd) * k
              + (Sd[:, None] - Sd[None, :]) * U * b32
              + b32 - 3.0 * U * U * b52)
        val = max(float(k0.sum()) / (n * n), 0.0)
        out[order[ids[d]]] += np.sqrt(val)
    return out


# ---------------------------------------------------------------------------
# latent-state agreement

def nmi(z_a, z_b):
    """Normalized mutual information between two label sequences.

    Invariant to relabeling either argument.  Two constant sequences
    describe the same trivial partition and score 1; a constant sequence
    against a varying one shares no information and scores 0.
    """
    z_a = np.asarray(z_a).ravel()
    z_b = np.asarray(z_b).ravel()
    if z_a.shape != z_b.shape or z_a.size == 0:
        raise ValueError("label sequences must be equal-length, non-empty")
    _, ia = np.unique(z_a, return_inverse=True)
    _, ib = np.unique(z_b, return_inverse=True)
    Ka, Kb = ia.max() + 1, ib.max() + 1
    joint = np.zeros((Ka, Kb))
    np.add.at(joint, (ia, ib), 1.0)
    joint /= z_a.size
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    Ha = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
    Hb = -np.sum(pb[pb > 0] * np.log(pb[pb > 0]))
    if Ha == 0.0 and Hb == 0.0:
        return 1.0
    if Ha == 0.0 or Hb == 0.0:
        return 0.0
    nz = joint > 0
    I = np.sum(joint[nz] * np.log(joint[nz]
                                  / np.outer(pa, pb)[nz]))
    return float(min(max(I / np.sqrt(Ha * Hb), 0.0), 1.0))


def latent_rmse(x_est, x_true, reduce="rmse"):
    """Pathwise error between latent trajectories.

    Default is the root of the time-averaged squared Euclidean error;
    ``reduce="sum"`` gives the plain sum of per-step distances instead.
    """
    x_est = np.asarray(x_est, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_est.shape != x_true.shape:
        raise ValueError("trajectory shapes differ")
    d = x_est - x_true
    if d.ndim == 1:
        d = d[:, None]
    sq = np.sum(d * d, axis=1)
    if reduce == "rmse":
        return float(np.sqrt(np.mean(sq)))
    if reduce == "sum":
        return float(np.sum(np.sqrt(sq)))
    raise ValueError("reduce must be 'rmse' or 'sum'")


def slds_em_lower_bound(params, obs, n_mc=100, burn_in=10, seed=0, p0=None):
    """Monte-Carlo lower-bound surrogate for the switching marginal.

    Averages the complete-data loglikelihood over blocked-Gibbs draws of
    the latent pair at fixed parameters.
    """
    from .slds import (
        _slds_p0,
        complete_data_loglik,
        slds_blocked_gibbs_x,
        slds_blocked_gibbs_z,
        slds_init_latent,
    )

    if params.family != "slds":
        raise ValueError("only defined for the switching family")
    if n_mc < 1 or burn_in < 0:
        raise ValueError("need n_mc >= 1 and burn_in >= 0")
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    p0 = _slds_p0(params, p0)
    z = slds_init_latent(params, obs, rng, mode="filtered", p0=p0)
    for _ in range(burn_in):
        x = slds_blocked_gibbs_x(params, obs, z, rng, p0=p0)
        z = slds_blocked_gibbs_z(params, obs, x, rng, p0=p0)[1:]
    vals = np.empty(n_mc)
    for r in range(n_mc):
        x = slds_blocked_gibbs_x(params, obs, z, rng, p0=p0)
        zf = slds_blocked_gibbs_z(params, obs, x, rng, p0=p0)
        z = zf[1:]
        vals[r] = complete_data_loglik(params, obs, x, zf, p0=p0)
    return float(vals.mean())
