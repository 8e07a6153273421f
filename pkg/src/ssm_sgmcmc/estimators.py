"""Stochastic gradient estimators built on Fisher's identity.

The marginal-likelihood gradient decomposes as a sum over timesteps of
expected complete-data terms E[∇ log p(y_t, u_t | u_{t-1})] under the
smoothing posterior.  The full gradient sums every term exactly; the
subsequence estimators sum only a random core S with inverse-inclusion
weights, computing the expectations either from full-sequence messages
(unbiased, still O(T)) or from messages run on a buffered window S*
(cheap, bias decaying geometrically in the buffer size B).

All public functions return the gradient of the log *posterior* estimate in
unconstrained coordinates (ascent direction), including the prior term.
"""

import dataclasses

import numpy as np

from ssm_sgmcmc.messages import (
    hmm_forward_backward,
    hmm_pairwise_marginals,
    kalman_backward,
    kalman_forward,
    lgssm_pairwise_marginals,
)
from ssm_sgmcmc.models import default_p0, stack_lags
from ssm_sgmcmc.params import (
    BlockVec,
    grad_chol_unconstrained,
    log_prior_grad,
    zero_grad,
)

SCHEMES = ("uniform", "partition")


@dataclasses.dataclass(frozen=True)
class BufferedSubsequence:
    """Core indices S, buffered window S* (clipped to the sequence), and
    per-core inverse-inclusion weights."""

    core: range
    window: range
    weights: np.ndarray
    scheme: str

    def __post_init__(self):
        if not (self.window.start <= self.core.start
                and self.core.stop <= self.window.stop):
            raise ValueError("core must be contained in the window")
        if len(self.weights) != len(self.core):
            raise ValueError("one weight per core index required")
        if np.any(np.asarray(self.weights) < 1.0 - 1e-12):
            raise ValueError("inverse-inclusion weights must be >= 1")


def inclusion_probs(T, S, scheme):
    """Pr(t in S) for each timestep under the subsequence scheme."""
    _check_ts(T, S)
    t = np.arange(T)
    if scheme == "uniform":
        return np.minimum.reduce([t + 1, T - t, np.full(T, S),
                                  np.full(T, T - S + 1)]) / (T - S + 1)
    if scheme == "partition":
        if T % S != 0:
            raise ValueError(f"partition scheme needs S | T (got S={S}, T={T})")
        return np.full(T, S / T)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def _check_ts(T, S):
    if not 1 <= S <= T:
        raise ValueError(f"need 1 <= S <= T, got S={S}, T={T}")


def all_starts(T, S, scheme):
    """Every possible core start index under the scheme."""
    _check_ts(T, S)
    if scheme == "uniform":
        return list(range(T - S + 1))
    if scheme == "partition":
        if T % S != 0:
            raise ValueError(f"partition scheme needs S | T (got S={S}, T={T})")
        return list(range(0, T, S))
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def subsequence_from_start(T, S, B, scheme, start):
    """Deterministically build the buffered subsequence at a given start."""
    if B < 0:
        raise ValueError("buffer size B must be >= 0")
    core = range(start, start + S)
    window = range(max(0, start - B), min(T, start + S + B))
    weights = 1.0 / inclusion_probs(T, S, scheme)[core.start:core.stop]
    return BufferedSubsequence(core=core, window=window, weights=weights,
                               scheme=scheme)


def sample_subsequence(T, S, B, scheme, seed):
    """Draw a random buffered subsequence; ``seed`` may be a Generator."""
    rng = np.random.default_rng(seed)
    starts = all_starts(T, S, scheme)
    start = starts[rng.integers(len(starts))]
    return subsequence_from_start(T, S, B, scheme, start)


def full_subsequence(T):
    """The whole sequence as a trivially-weighted core (S=T)."""
    return BufferedSubsequence(core=range(T), window=range(T),
                               weights=np.ones(T), scheme="full")


# ---------------------------------------------------------------------------
# expected complete-data gradients


def expected_complete_grad(params, obs_window, pairwise, weights,
                           lag_context=None):
    """Weighted sum over the window of expected complete-data gradient terms.

    ``pairwise`` comes from the message-passing module: a (W, K, K) array
    for discrete families, or the (means, covs) pair for the LGSSM.
    ``weights`` has one entry per window timestep (zero outside the core).
    The result lives in unconstrained coordinates and contains no prior term.
    """
    obs_window = np.atleast_2d(np.asarray(obs_window, dtype=float))
    w = np.asarray(weights, dtype=float)
    if len(w) != len(obs_window):
        raise ValueError("one weight per window timestep required")
    fam = params.family
    if fam == "hmm":
        return _discrete_grad(params, obs_window, pairwise, w, None)
    if fam == "arhmm":
        return _discrete_grad(params, obs_window, pairwise, w, lag_context)
    if fam == "lgssm":
        return _lgssm_grad(params, obs_window, pairwise, w)
    raise ValueError(
        f"no analytic complete-data gradient for family {fam!r}")


def _phi_grad(Pi, pair, w):
    # d log Pi[j, k] / d log phi[j, k'] = delta_{k k'} - Pi[j, k']
    wpair = np.einsum("t,tjk->jk", w, pair)
    wprev = np.einsum("t,tj->j", w, pair.sum(axis=2))
    return wpair - wprev[:, None] * Pi


def _gauss_block_grads(psi, wg, resid):
    """Weighted-responsibility gradients of a Gaussian factor, per state.

    wg: (W, K) weights*responsibilities; resid: (K, W, d) residuals.
    Returns (linear-term sums (K, d), unconstrained psi gradients (K, d, d)).
    """
    K, _, d = resid.shape
    lin = np.einsum("tk,kti->ki", wg, resid)
    gpsi = np.empty((K, d, d))
    s = wg.sum(axis=0)
    idx = np.arange(d)
    for k in range(K):
        M = np.einsum("t,ti,tj->ij", wg[:, k], resid[k], resid[k])
        Gc = -M @ psi[k]
        Gc[idx, idx] += s[k] / psi[k, idx, idx]
        gpsi[k] = grad_chol_unconstrained(Gc, psi[k])
    return lin, gpsi


def _discrete_grad(params, obs, pair, w, lag_context):
    g = zero_grad(params)
    gamma = pair.sum(axis=1)                      # (W, K)
    g["phi"] = _phi_grad(params.Pi, pair, w)
    wg = w[:, None] * gamma
    if params.family == "hmm":
        resid = obs[None, :, :] - params.mu[:, None, :]       # (K, W, m)
        lin, gpsi = _gauss_block_grads(params.psi_sigma, wg, resid)
        lam = params.psi_sigma @ np.swapaxes(params.psi_sigma, -1, -2)
        g["mu"] = np.einsum("kij,kj->ki", lam, lin)
        g["psi_sigma"] = gpsi
    else:
        ybar = stack_lags(obs, params.p, context=lag_context)  # (W, m*p)
        mean = np.einsum("kij,tj->kti", params.A, ybar)
        resid = obs[None, :, :] - mean                         # (K, W, m)
        lam = params.psi_q @ np.swapaxes(params.psi_q, -1, -2)
        wr = wg.T[:, :, None] * resid                          # (K, W, m)
        g["A"] = np.einsum("kij,ktj,tl->kil", lam, wr, ybar)
        _, gpsi = _gauss_block_grads(params.psi_q, wg, resid)
        g["psi_q"] = gpsi
    return g


def _lgssm_grad(params, obs, pairwise, w):
    means, covs = pairwise
    n = params.n
    mu_a, mu_b = means[:, :n], means[:, n:]
    M11 = covs[:, :n, :n] + np.einsum("ti,tj->tij", mu_a, mu_a)
    M22 = covs[:, n:, n:] + np.einsum("ti,tj->tij", mu_b, mu_b)
    M21 = covs[:, n:, :n] + np.einsum("ti,tj->tij", mu_b, mu_a)
    S11 = np.einsum("t,tij->ij", w, M11)
    S22 = np.einsum("t,tij->ij", w, M22)
    S21 = np.einsum("t,tij->ij", w, M21)
    Sw = w.sum()
    A, C = params.A, params.C
    lam_q = params.psi_q @ params.psi_q.T
    lam_r = params.psi_r @ params.psi_r.T

    g = zero_grad(params)
    g["A"] = lam_q @ (S21 - A @ S11)
    E_res = S22 - A @ S21.T - S21 @ A.T + A @ S11 @ A.T
    g["psi_q"] = _psi_grad_from_scatter(params.psi_q, E_res, Sw)

    Syb = np.einsum("t,ti,tj->ij", w, obs, mu_b)
    Syy = np.einsum("t,ti,tj->ij", w, obs, obs)
    gC = lam_r @ (Syb - C @ S22)
    r = min(params.m, n)
    gC[:r, :r] = 0.0                              # frozen identity block
    g["C"] = gC
    E_obs = Syy - C @ Syb.T - Syb @ C.T + C @ S22 @ C.T
    g["psi_r"] = _psi_grad_from_scatter(params.psi_r, E_obs, Sw)
    return g


def _psi_grad_from_scatter(psi, scatter, weight_sum):
    d = psi.shape[0]
    Gc = -scatter @ psi
    idx = np.arange(d)
    Gc[idx, idx] += weight_sum / psi[idx, idx]
    return grad_chol_unconstrained(Gc, psi)


# ---------------------------------------------------------------------------
# window plumbing


def _window_weights(sub):
    w = np.zeros(len(sub.window))
    w[np.asarray(sub.core) - sub.window.start] = sub.weights
    return w


def _lag_context(params, obs, w0):
    if params.family != "arhmm" or w0 == 0:
        return None
    return obs[max(0, w0 - params.p):w0]


def window_pairwise(params, obs, window, p0):
    """Messages + pairwise posteriors for one window of the sequence.

    Returns (pairwise, lag_context) in the family's native pairwise format.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    obs_win = obs[window.start:window.stop]
    fam = params.family
    if fam in ("hmm", "arhmm"):
        ctx = _lag_context(params, obs, window.start)
        msgs = hmm_forward_backward(params, obs_win, p0, lag_context=ctx)
        return hmm_pairwise_marginals(msgs, params), ctx
    if fam == "lgssm":
        fwd = kalman_forward(params, obs_win, p0)
        bwd = kalman_backward(params, obs_win)
        return lgssm_pairwise_marginals(fwd, bwd, params, obs_win), None
    raise ValueError(f"no analytic message passing for family {fam!r}")


def buffered_gradient(params, obs, sub, prior=None, p0=None):
    """The windowed estimator: messages on S*, core-weighted sums, + prior."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    if p0 is None:
        p0 = default_p0(params)
    pairwise, ctx = window_pairwise(params, obs, sub.window, p0)
    obs_win = obs[sub.window.start:sub.window.stop]
    g = expected_complete_grad(params, obs_win, pairwise, _window_weights(sub),
                               lag_context=ctx)
    return g + log_prior_grad(params, prior)


def unbiased_gradient(params, obs, sub, prior=None, p0=None, pairwise=None):
    """Core-weighted sums taken from *full-sequence* marginals.

    Unbiased for the full gradient over subsequence draws.  ``pairwise`` may
    carry precomputed full-sequence pairwise posteriors to amortize repeated
    calls at the same parameters.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    T = len(obs)
    if p0 is None:
        p0 = default_p0(params)
    if pairwise is None:
        pairwise, _ = window_pairwise(params, obs, range(T), p0)
    w = np.zeros(T)
    w[np.asarray(sub.core)] = sub.weights
    g = expected_complete_grad(params, obs, pairwise, w)
    return g + log_prior_grad(params, prior)


def full_gradient(params, obs, prior=None, p0=None):
    """Exact gradient of marginal loglik + log prior (Fisher's identity)."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    return buffered_gradient(params, obs, full_subsequence(len(obs)),
                             prior=prior, p0=p0)
