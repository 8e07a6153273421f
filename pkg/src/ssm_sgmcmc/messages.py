"""Exact smoothing over (possibly buffered) windows of observations.

Window convention: a window of length W is entered through a *virtual*
latent state at index -1 distributed as ``p0``, with no emission attached.
Every timestep t in [0, W) then owns exactly one transition (from t-1) and
one emission, so pairwise posteriors exist for every t — the t=0 pair
couples the virtual state.  Marginal likelihoods are defined under the same
convention; ``p0`` is always treated as a fixed input, never differentiated.

Discrete messages run through the scaled linear-domain kernel (compiled or
numpy, see :mod:`ssm_sgmcmc.kernels`); per-step normalization makes it
underflow-safe, and a log-domain reference implementation is kept here for
equivalence testing.  Gaussian messages are kept in information form and
converted to moments only at extraction time, via Cholesky solves.
"""

import numpy as np
from scipy.special import logsumexp

from ssm_sgmcmc.kernels import fb_pass
from ssm_sgmcmc.models import stack_lags

_LOG2PI = np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# shared numerics


def _spd_chol(M, what):
    """Cholesky factor with a cheap reciprocal-condition guard."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError(f"{what} is not positive definite") from None
    dg = np.diagonal(L)
    if (dg.min() / dg.max()) ** 2 < 1e-12:
        raise ValueError(f"{what} is ill-conditioned (rcond < 1e-12)")
    return L


def _chol_solve(L, B):
    return np.linalg.solve(L.T, np.linalg.solve(L, B))


def _spd_inv(M, what):
    return _chol_solve(_spd_chol(M, what), np.eye(M.shape[-1]))


def _mvn_logpdf(y, mean, cov, what="predictive covariance"):
    L = _spd_chol(cov, what)
    z = np.linalg.solve(L, y - mean)
    return -0.5 * len(y) * _LOG2PI - np.log(np.diagonal(L)).sum() - 0.5 * z @ z


# ---------------------------------------------------------------------------
# discrete families (HMM / ARHMM)


def discrete_log_emissions(params, obs, lag_context=None):
    """Per-state emission log densities, (W, K).

    For the ARHMM the lagged design uses ``lag_context`` (observations
    immediately preceding the window, newest last) and zero-pads whatever
    history is missing.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    if params.family == "hmm":
        return _gauss_log_emissions(obs, params.mu[:, None, :], params.psi_sigma)
    if params.family == "arhmm":
        ybar = stack_lags(obs, params.p, context=lag_context)
        means = np.einsum("kij,tj->kti", params.A, ybar)
        return _gauss_log_emissions(obs, means, params.psi_q)
    raise ValueError(f"no discrete emissions for family {params.family!r}")


def _gauss_log_emissions(obs, means, psi):
    # means: (K, 1, m) or (K, W, m); psi: (K, m, m) precision factors
    W, m = obs.shape
    d = obs[None, :, :] - means                       # (K, W, m)
    z = np.einsum("ktj,kji->kti", d, psi)             # rows d^T psi
    logdiag = np.log(np.diagonal(psi, axis1=-2, axis2=-1)).sum(axis=-1)
    out = (-0.5 * m * _LOG2PI + logdiag[:, None]
           - 0.5 * np.sum(z * z, axis=-1))
    if np.any(np.isnan(out)):
        raise ValueError("NaN in emission log densities")
    return out.T.copy()                               # (W, K)


class DiscreteMessageSet:
    """Forward/backward messages of a discrete window.

    ``log_alpha`` rows are normalized filtered distributions;
    ``exp(log_beta)`` carries the backward messages scaled so smoothed
    marginals are ``exp(log_alpha + log_beta)`` directly; ``log_norm`` are
    per-step log normalizers summing to the marginal loglik.
    """

    def __init__(self, log_alpha, log_beta, log_norm, p0, window):
        self.log_alpha = log_alpha
        self.log_beta = log_beta
        self.log_norm = log_norm
        self.p0 = p0
        self.window = window
        # linear-domain cache for pairwise assembly
        self._alpha = np.exp(log_alpha)
        self._beta = np.exp(log_beta)

    @property
    def gamma(self):
        """Smoothed marginals, (W, K)."""
        return self._alpha * self._beta

    @property
    def loglik(self):
        return float(self.log_norm.sum())


def hmm_forward_backward(params, obs_window, p0, lag_context=None):
    """Run the forward and backward recursions over one window."""
    logP = discrete_log_emissions(params, obs_window, lag_context=lag_context)
    return _discrete_fb_from_logP(logP, params.Pi, p0, (0, len(logP)))


def _discrete_fb_from_logP(logP, Pi, p0, window):
    p0 = np.asarray(p0, dtype=float)
    if abs(p0.sum() - 1.0) > 1e-8 or np.any(p0 < 0):
        raise ValueError("p0 must be a probability vector")
    if logP.shape[0] == 0:
        raise ValueError("window must be nonempty")
    offsets = logP.max(axis=1)
    P = np.exp(logP - offsets[:, None])
    alpha, beta, c = fb_pass(np.ascontiguousarray(P),
                             np.ascontiguousarray(Pi, dtype=float), p0)
    with np.errstate(divide="ignore"):
        msgs = DiscreteMessageSet(np.log(alpha), np.log(beta),
                                  np.log(c) + offsets, p0, window)
    msgs._P = P
    msgs._c = c
    return msgs


def hmm_pairwise_marginals(msgs, params, obs_window=None, lag_context=None):
    """Pairwise posteriors over (z_{t-1}, z_t) for every t, (W, K, K).

    Index 0 pairs the virtual pre-window state with z_0.
    """
    Pi = params.Pi
    P, c = msgs._P, msgs._c
    right = P * msgs._beta / c[:, None]               # (W, K)
    left = np.vstack([msgs.p0[None, :], msgs._alpha[:-1]])
    pair = left[:, :, None] * Pi[None, :, :] * right[:, None, :]
    return pair


def hmm_marginal_loglik(params, obs, p0, lag_context=None):
    """Exact log marginal likelihood of ``obs`` under the window convention."""
    msgs = hmm_forward_backward(params, obs, p0, lag_context=lag_context)
    return msgs.loglik


def discrete_fb_log_reference(params, obs_window, p0, lag_context=None):
    """Log-domain (logsumexp) forward-backward; slow reference path.

    Returns (loglik, gamma, pairwise) for equivalence tests against the
    scaled linear-domain kernel.
    """
    logP = discrete_log_emissions(params, obs_window, lag_context=lag_context)
    with np.errstate(divide="ignore"):
        logPi = np.log(params.Pi)
        logp0 = np.log(np.asarray(p0, dtype=float))
    W, K = logP.shape
    la = np.empty((W, K))
    la[0] = logsumexp(logp0[:, None] + logPi, axis=0) + logP[0]
    for t in range(1, W):
        la[t] = logsumexp(la[t - 1][:, None] + logPi, axis=0) + logP[t]
    lb = np.empty((W, K))
    lb[W - 1] = 0.0
    for t in range(W - 2, -1, -1):
        lb[t] = logsumexp(logPi + (logP[t + 1] + lb[t + 1])[None, :], axis=1)
    loglik = float(logsumexp(la[-1]))
    gamma = np.exp(la + lb - loglik)
    left = np.vstack([logp0[None, :], la[:-1]])
    logpair = (left[:, :, None] + logPi[None, :, :]
               + (logP + lb)[:, None, :] - loglik)
    return loglik, gamma, np.exp(logpair)


# ---------------------------------------------------------------------------
# linear-Gaussian families (time-varying core, LGSSM wrappers)


class GaussianMessageSet:
    """Information-form messages of a linear-Gaussian window.

    Forward part: ``h_alpha``/``L_alpha`` natural parameters of the filtered
    marginals, per-step predictive moments, per-step log normalizers.
    Backward part: ``h_beta``/``L_beta`` with terminal zeros.
    """

    def __init__(self, window, p0=None, h_alpha=None, L_alpha=None,
                 m_pred=None, P_pred=None, step_loglik=None,
                 h_beta=None, L_beta=None):
        self.window = window
        self.p0 = p0
        self.h_alpha = h_alpha
        self.L_alpha = L_alpha
        self.m_pred = m_pred
        self.P_pred = P_pred
        self.step_loglik = step_loglik
        self.h_beta = h_beta
        self.L_beta = L_beta

    @property
    def loglik(self):
        return float(self.step_loglik.sum())


def kalman_forward_tv(A_seq, Q_seq, C, R, obs, mu0, V0):
    """Forward information filter with per-step dynamics matrices.

    ``A_seq[t]``/``Q_seq[t]`` govern the transition into time t; the t=0
    transition leaves the virtual state ``N(mu0, V0)``.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    W = obs.shape[0]
    if W == 0:
        raise ValueError("window must be nonempty")
    n = A_seq.shape[-1]
    Rl = _spd_chol(R, "R")
    CtRiC = C.T @ _chol_solve(Rl, C)
    CtRiY = np.linalg.solve(Rl.T, np.linalg.solve(Rl, obs.T)).T @ C
    h_alpha = np.empty((W, n))
    L_alpha = np.empty((W, n, n))
    m_pred = np.empty((W, n))
    P_pred = np.empty((W, n, n))
    step_loglik = np.empty(W)
    mean, cov = np.asarray(mu0, dtype=float), np.asarray(V0, dtype=float)
    for t in range(W):
        A, Q = A_seq[t], Q_seq[t]
        mp = A @ mean
        Pp = A @ cov @ A.T + Q
        Pp = 0.5 * (Pp + Pp.T)
        m_pred[t] = mp
        P_pred[t] = Pp
        Syy = C @ Pp @ C.T + R
        step_loglik[t] = _mvn_logpdf(obs[t], C @ mp, Syy)
        Ppinv = _spd_inv(Pp, f"predictive state covariance at t={t}")
        L = CtRiC + Ppinv
        L = 0.5 * (L + L.T)
        h = CtRiY[t] + Ppinv @ mp
        L_alpha[t] = L
        h_alpha[t] = h
        Ll = _spd_chol(L, f"filtered precision at t={t}")
        cov = _chol_solve(Ll, np.eye(n))
        mean = _chol_solve(Ll, h)
    return GaussianMessageSet((0, W), p0=(np.asarray(mu0, float),
                                          np.asarray(V0, float)),
                              h_alpha=h_alpha, L_alpha=L_alpha,
                              m_pred=m_pred, P_pred=P_pred,
                              step_loglik=step_loglik)


def kalman_backward_tv(A_seq, Q_seq, C, R, obs):
    """Backward information recursion with per-step dynamics matrices."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    W = obs.shape[0]
    if W == 0:
        raise ValueError("window must be nonempty")
    n = A_seq.shape[-1]
    Rl = _spd_chol(R, "R")
    CtRiC = C.T @ _chol_solve(Rl, C)
    CtRiY = np.linalg.solve(Rl.T, np.linalg.solve(Rl, obs.T)).T @ C
    h_beta = np.zeros((W, n))
    L_beta = np.zeros((W, n, n))
    for t in range(W - 2, -1, -1):
        A, Q = A_seq[t + 1], Q_seq[t + 1]
        Qinv = _spd_inv(Q, f"state noise covariance at t={t + 1}")
        QiA = Qinv @ A
        M = Qinv + CtRiC + L_beta[t + 1]
        G = _spd_inv(0.5 * (M + M.T), f"backward inner matrix at t={t}")
        Lb = A.T @ QiA - QiA.T @ G @ QiA
        L_beta[t] = 0.5 * (Lb + Lb.T)
        h_beta[t] = QiA.T @ (G @ (CtRiY[t + 1] + h_beta[t + 1]))
    return GaussianMessageSet((0, W), h_beta=h_beta, L_beta=L_beta)


def gaussian_pairwise_tv(fwd, bwd, A_seq, Q_seq, C, R, obs):
    """Joint posteriors over (x_{t-1}, x_t), t in [0, W); t=0 uses the
    virtual state from the forward pass's p0.

    Returns (means (W, 2n), covs (W, 2n, 2n)).
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    W = obs.shape[0]
    n = A_seq.shape[-1]
    mu0, V0 = fwd.p0
    Rl = _spd_chol(R, "R")
    CtRiC = C.T @ _chol_solve(Rl, C)
    CtRiY = np.linalg.solve(Rl.T, np.linalg.solve(Rl, obs.T)).T @ C
    V0inv = _spd_inv(V0, "p0 covariance")
    means = np.empty((W, 2 * n))
    covs = np.empty((W, 2 * n, 2 * n))
    J = np.empty((2 * n, 2 * n))
    h = np.empty(2 * n)
    for t in range(W):
        A, Q = A_seq[t], Q_seq[t]
        Qinv = _spd_inv(Q, f"state noise covariance at t={t}")
        QiA = Qinv @ A
        if t == 0:
            prev_L, prev_h = V0inv, V0inv @ mu0
        else:
            prev_L, prev_h = fwd.L_alpha[t - 1], fwd.h_alpha[t - 1]
        J[:n, :n] = prev_L + A.T @ QiA
        J[:n, n:] = -QiA.T
        J[n:, :n] = -QiA
        J[n:, n:] = Qinv + CtRiC + bwd.L_beta[t]
        h[:n] = prev_h
        h[n:] = CtRiY[t] + bwd.h_beta[t]
        Jl = _spd_chol(0.5 * (J + J.T), f"pairwise precision at t={t}")
        cov = _chol_solve(Jl, np.eye(2 * n))
        covs[t] = 0.5 * (cov + cov.T)
        means[t] = _chol_solve(Jl, h)
    return means, covs


def gaussian_smoothed_marginals(fwd, bwd):
    """Smoothed means/covariances per timestep from both message sets."""
    W, n = fwd.h_alpha.shape
    means = np.empty((W, n))
    covs = np.empty((W, n, n))
    for t in range(W):
        L = fwd.L_alpha[t] + bwd.L_beta[t]
        Ll = _spd_chol(0.5 * (L + L.T), f"smoothed precision at t={t}")
        cov = _chol_solve(Ll, np.eye(n))
        covs[t] = 0.5 * (cov + cov.T)
        means[t] = _chol_solve(Ll, fwd.h_alpha[t] + bwd.h_beta[t])
    return means, covs


def _lgssm_seqs(params, W):
    A_seq = np.broadcast_to(params.A, (W,) + params.A.shape)
    Q_seq = np.broadcast_to(params.Q, (W, params.n, params.n))
    return A_seq, Q_seq


def kalman_forward(params, obs_window, p0):
    """LGSSM forward filter; ``p0`` is the (mean, cov) of the virtual state."""
    obs_window = np.atleast_2d(np.asarray(obs_window, dtype=float))
    A_seq, Q_seq = _lgssm_seqs(params, len(obs_window))
    return kalman_forward_tv(A_seq, Q_seq, params.C, params.R, obs_window,
                             p0[0], p0[1])


def kalman_backward(params, obs_window):
    obs_window = np.atleast_2d(np.asarray(obs_window, dtype=float))
    A_seq, Q_seq = _lgssm_seqs(params, len(obs_window))
    return kalman_backward_tv(A_seq, Q_seq, params.C, params.R, obs_window)


def lgssm_pairwise_marginals(fwd, bwd, params, obs_window):
    obs_window = np.atleast_2d(np.asarray(obs_window, dtype=float))
    A_seq, Q_seq = _lgssm_seqs(params, len(obs_window))
    return gaussian_pairwise_tv(fwd, bwd, A_seq, Q_seq, params.C, params.R,
                                obs_window)


def lgssm_marginal_loglik(params, obs, p0):
    """Exact log marginal likelihood from the forward predictive factors."""
    return kalman_forward(params, obs, p0).loglik
