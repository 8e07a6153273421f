"""Blocked Gibbs over switching linear dynamics and the three
Rao-Blackwellized gradient estimators built on it.

The window convention matches the analytic families: a window [w0, w1)
carries virtual pre-window latents (z at w0-1 distributed by the discrete
part of p0, x at w0-1 Gaussian with the continuous part).  Conditional on
z the model is a time-varying LGSSM; conditional on x the labels form a
chain with Gaussian "emissions" given by the dynamics factors, so both
blocks admit exact joint draws.
"""

import numpy as np

from ssm_sgmcmc.estimators import _phi_grad, _psi_grad_from_scatter
from ssm_sgmcmc.messages import (
    _discrete_fb_from_logP,
    _mvn_logpdf,
    _spd_chol,
    _spd_inv,
    hmm_pairwise_marginals,
    kalman_backward_tv,
    kalman_forward_tv,
    gaussian_pairwise_tv,
)
from ssm_sgmcmc.models import default_p0
from ssm_sgmcmc.params import (
    cov_from_chol_prec,
    log_prior_grad,
    zero_grad,
)

_LOG2PI = np.log(2.0 * np.pi)

ESTIMATORS = ("xz", "z-marginal", "x-marginal")


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)


def _slds_p0(params, p0):
    if p0 is None:
        p0 = default_p0(params)
    pi0, mu0, V0 = p0
    pi0 = np.asarray(pi0, dtype=float)
    if pi0.shape != (params.K,) or abs(pi0.sum() - 1.0) > 1e-8 \
            or np.any(pi0 < 0):
        raise ValueError("discrete part of p0 must be a length-K simplex")
    return pi0, np.asarray(mu0, dtype=float), np.asarray(V0, dtype=float)


def _dynamics_log_factors(params, x):
    """log N(x_t | A_k x_{t-1}, Q_k) for every t and k; x includes the
    virtual row, so the result has one row per window timestep."""
    prev, cur = x[:-1], x[1:]
    n = params.n
    logf = np.empty((len(cur), params.K))
    for k in range(params.K):
        psi = params.psi_q[k]
        r = (cur - prev @ params.A[k].T) @ psi
        logf[:, k] = (-0.5 * n * _LOG2PI
                      + np.sum(np.log(np.diag(psi)))
                      - 0.5 * np.einsum("ti,ti->t", r, r))
    return logf


def _categorical(rng, probs):
    return int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum()))


def slds_blocked_gibbs_x(params, obs_window, z, seed, p0=None):
    """Joint draw of the continuous path given labels.

    ``z`` has one label per window timestep (a leading virtual label is
    ignored if present).  Returns (W+1, n) including the virtual row.
    """
    obs_window = np.atleast_2d(np.asarray(obs_window, dtype=float))
    W = len(obs_window)
    z = np.asarray(z, dtype=int)
    if len(z) == W + 1:
        z = z[1:]
    if len(z) != W:
        raise ValueError("need one label per window timestep")
    rng = _rng(seed)
    _, mu0, V0 = _slds_p0(params, p0)
    n = params.n
    Q = cov_from_chol_prec(params.psi_q)
    A_seq, Q_seq = params.A[z], Q[z]
    fwd = kalman_forward_tv(A_seq, Q_seq, params.C, params.R, obs_window,
                            mu0, V0)
    lam_q = params.psi_q @ np.swapaxes(params.psi_q, -1, -2)
    x = np.empty((W + 1, n))
    prec = fwd.L_alpha[W - 1]
    h = fwd.h_alpha[W - 1]
    for t in range(W - 1, -1, -1):
        L = _spd_chol(0.5 * (prec + prec.T), f"sampling precision at t={t}")
        mean = np.linalg.solve(L.T, np.linalg.solve(L, h))
        x[t + 1] = mean + np.linalg.solve(L.T, rng.standard_normal(n))
        AtQi = A_seq[t].T @ lam_q[z[t]]
        if t > 0:
            prec = fwd.L_alpha[t - 1] + AtQi @ A_seq[t]
            h = fwd.h_alpha[t - 1] + AtQi @ x[t + 1]
        else:
            V0inv = _spd_inv(V0, "p0 covariance")
            prec = V0inv + AtQi @ A_seq[t]
            h = V0inv @ mu0 + AtQi @ x[t + 1]
    L = _spd_chol(0.5 * (prec + prec.T), "virtual sampling precision")
    mean = np.linalg.solve(L.T, np.linalg.solve(L, h))
    x[0] = mean + np.linalg.solve(L.T, rng.standard_normal(n))
    return x


def slds_blocked_gibbs_z(params, obs_window, x, seed, p0=None):
    """Joint draw of the labels given the continuous path.

    Backward messages over the dynamics factors, then forward sampling.
    Returns (W+1,) including the virtual label.  The shared emission
    (y | x) cancels from every factor.
    """
    obs_window = np.atleast_2d(np.asarray(obs_window, dtype=float))
    W = len(obs_window)
    x = np.asarray(x, dtype=float)
    if x.shape != (W + 1, params.n):
        raise ValueError("x must include the virtual row, (W+1, n)")
    rng = _rng(seed)
    pi0, _, _ = _slds_p0(params, p0)
    Pi = params.Pi
    logf = _dynamics_log_factors(params, x)
    f = np.exp(logf - logf.max(axis=1, keepdims=True))
    beta = np.empty((W, params.K))
    beta[W - 1] = 1.0
    for t in range(W - 2, -1, -1):
        b = Pi @ (f[t + 1] * beta[t + 1])
        beta[t] = b / b.sum()
    z = np.empty(W + 1, dtype=int)
    bvirt = Pi @ (f[0] * beta[0])
    z[0] = _categorical(rng, pi0 * bvirt)
    for t in range(W):
        z[t + 1] = _categorical(rng, Pi[z[t]] * f[t] * beta[t])
    return z


def slds_init_latent(params, obs_window, seed, mode="filtered", p0=None):
    """Label initialization for the Gibbs chain; returns (W,)."""
    obs_window = np.atleast_2d(np.asarray(obs_window, dtype=float))
    W = len(obs_window)
    rng = _rng(seed)
    pi0, mu0, V0 = _slds_p0(params, p0)
    if mode == "obs-proxy":
        n, m = params.n, params.m
        if n > m:
            raise ValueError("obs-proxy init needs state dim <= obs dim")
        xp = np.vstack([mu0[None, :], obs_window[:, :n]])
        return slds_blocked_gibbs_z(params, obs_window, xp, rng,
                                    p0=p0)[1:]
    if mode != "filtered":
        raise ValueError("mode must be 'filtered' or 'obs-proxy'")
    K, n = params.K, params.n
    Q = cov_from_chol_prec(params.psi_q)
    R = params.R
    C = params.C
    z = np.empty(W, dtype=int)
    mean, cov = mu0, V0
    trans = pi0 @ params.Pi
    for t in range(W):
        ll = np.empty(K)
        preds = []
        for k in range(K):
            mp = params.A[k] @ mean
            Pp = params.A[k] @ cov @ params.A[k].T + Q[k]
            Syy = C @ Pp @ C.T + R
            ll[k] = _mvn_logpdf(obs_window[t], C @ mp, Syy)
            preds.append((mp, Pp))
        wts = trans * np.exp(ll - ll.max())
        z[t] = _categorical(rng, wts)
        mp, Pp = preds[z[t]]
        # condition the chosen predictive on y_t
        Syy = C @ Pp @ C.T + R
        gain = np.linalg.solve(0.5 * (Syy + Syy.T), C @ Pp).T
        mean = mp + gain @ (obs_window[t] - C @ mp)
        cov = Pp - gain @ C @ Pp
        cov = 0.5 * (cov + cov.T)
        trans = params.Pi[z[t]]
    return z


def _emission_hard_grads(params, obs_window, x, w):
    """C and psi_r gradients with the continuous path plugged in."""
    xt = x[1:]
    lam_r = params.psi_r @ params.psi_r.T
    e = obs_window - xt @ params.C.T
    gC = lam_r @ np.einsum("t,ti,tj->ij", w, e, xt)
    r = min(params.m, params.n)
    gC[:r, :r] = 0.0
    E_obs = np.einsum("t,ti,tj->ij", w, e, e)
    return gC, _psi_grad_from_scatter(params.psi_r, E_obs, w.sum())


def _one_hot_pairs(zf, K):
    W = len(zf) - 1
    pair = np.zeros((W, K, K))
    pair[np.arange(W), zf[:-1], zf[1:]] = 1.0
    return pair


def _xz_grad(params, obs_window, x, zf, w):
    g = zero_grad(params)
    z = zf[1:]
    g["phi"] = _phi_grad(params.Pi, _one_hot_pairs(zf, params.K), w)
    lam_q = params.psi_q @ np.swapaxes(params.psi_q, -1, -2)
    resid = x[1:] - np.einsum("tij,tj->ti", params.A[z], x[:-1])
    for k in range(params.K):
        wk = w * (z == k)
        g["A"][k] = lam_q[k] @ np.einsum("t,ti,tj->ij", wk, resid, x[:-1])
        M = np.einsum("t,ti,tj->ij", wk, resid, resid)
        g["psi_q"][k] = _psi_grad_from_scatter(params.psi_q[k], M, wk.sum())
    g["C"], g["psi_r"] = _emission_hard_grads(params, obs_window, x, w)
    return g


def _z_marginal_grad(params, obs_window, zf, w, p0):
    g = zero_grad(params)
    z = zf[1:]
    _, mu0, V0 = p0
    n = params.n
    Q = cov_from_chol_prec(params.psi_q)
    A_seq, Q_seq = params.A[z], Q[z]
    fwd = kalman_forward_tv(A_seq, Q_seq, params.C, params.R, obs_window,
                            mu0, V0)
    bwd = kalman_backward_tv(A_seq, Q_seq, params.C, params.R, obs_window)
    means, covs = gaussian_pairwise_tv(fwd, bwd, A_seq, Q_seq, params.C,
                                       params.R, obs_window)
    mu_a, mu_b = means[:, :n], means[:, n:]
    M11 = covs[:, :n, :n] + np.einsum("ti,tj->tij", mu_a, mu_a)
    M22 = covs[:, n:, n:] + np.einsum("ti,tj->tij", mu_b, mu_b)
    M21 = covs[:, n:, :n] + np.einsum("ti,tj->tij", mu_b, mu_a)
    g["phi"] = _phi_grad(params.Pi, _one_hot_pairs(zf, params.K), w)
    lam_q = params.psi_q @ np.swapaxes(params.psi_q, -1, -2)
    E_res = (M22 - np.einsum("tij,tlj->til", A_seq, M21)
             - np.einsum("tij,tlj->til", M21, A_seq)
             + np.einsum("tij,tjl,tcl->tic", A_seq, M11, A_seq))
    for k in range(params.K):
        wk = w * (z == k)
        S21 = np.einsum("t,tij->ij", wk, M21)
        S11 = np.einsum("t,tij->ij", wk, M11)
        g["A"][k] = lam_q[k] @ (S21 - params.A[k] @ S11)
        scatter = np.einsum("t,tij->ij", wk, E_res)
        g["psi_q"][k] = _psi_grad_from_scatter(params.psi_q[k], scatter,
                                               wk.sum())
    lam_r = params.psi_r @ params.psi_r.T
    Syb = np.einsum("t,ti,tj->ij", w, obs_window, mu_b)
    S22 = np.einsum("t,tij->ij", w, M22)
    gC = lam_r @ (Syb - params.C @ S22)
    r = min(params.m, n)
    gC[:r, :r] = 0.0
    g["C"] = gC
    Syy = np.einsum("t,ti,tj->ij", w, obs_window, obs_window)
    E_obs = (Syy - params.C @ Syb.T - Syb @ params.C.T
             + params.C @ S22 @ params.C.T)
    g["psi_r"] = _psi_grad_from_scatter(params.psi_r, E_obs, w.sum())
    return g


def _x_marginal_grad(params, obs_window, x, w, p0):
    g = zero_grad(params)
    pi0 = p0[0]
    W = len(obs_window)
    logf = _dynamics_log_factors(params, x)
    msgs = _discrete_fb_from_logP(logf, params.Pi, pi0, (0, W))
    pair = hmm_pairwise_marginals(msgs, params)
    g["phi"] = _phi_grad(params.Pi, pair, w)
    gamma = pair.sum(axis=1)
    wg = w[:, None] * gamma
    lam_q = params.psi_q @ np.swapaxes(params.psi_q, -1, -2)
    for k in range(params.K):
        resid = x[1:] - x[:-1] @ params.A[k].T
        g["A"][k] = lam_q[k] @ np.einsum("t,ti,tj->ij", wg[:, k], resid,
                                         x[:-1])
        M = np.einsum("t,ti,tj->ij", wg[:, k], resid, resid)
        g["psi_q"][k] = _psi_grad_from_scatter(params.psi_q[k], M,
                                               wg[:, k].sum())
    g["C"], g["psi_r"] = _emission_hard_grads(params, obs_window, x, w)
    return g


def slds_noisy_gradient(params, obs, sub, prior=None, p0=None,
                        estimator="xz", n_samples=1, burn_in=2, seed=0):
    """Gibbs-averaged stochastic gradient over a buffered window.

    ``estimator`` picks what is plugged in vs marginalized per recorded
    sweep: both latents (xz), the labels only with the continuous path
    smoothed out (z-marginal), or the path only with label expectations
    from a discrete forward-backward pass (x-marginal).
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    if n_samples < 1 or burn_in < 0:
        raise ValueError("need n_samples >= 1 and burn_in >= 0")
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    rng = _rng(seed)
    p0 = _slds_p0(params, p0)
    obs_win = obs[sub.window.start:sub.window.stop]
    w = np.zeros(len(sub.window))
    w[np.asarray(sub.core) - sub.window.start] = sub.weights
    z = slds_init_latent(params, obs_win, rng, mode="filtered", p0=p0)
    for _ in range(burn_in):
        x = slds_blocked_gibbs_x(params, obs_win, z, rng, p0=p0)
        z = slds_blocked_gibbs_z(params, obs_win, x, rng, p0=p0)[1:]
    acc = zero_grad(params)
    for _ in range(n_samples):
        x = slds_blocked_gibbs_x(params, obs_win, z, rng, p0=p0)
        zf = slds_blocked_gibbs_z(params, obs_win, x, rng, p0=p0)
        z = zf[1:]
        if estimator == "xz":
            acc = acc + _xz_grad(params, obs_win, x, zf, w)
        elif estimator == "z-marginal":
            acc = acc + _z_marginal_grad(params, obs_win, zf, w, p0)
        else:
            acc = acc + _x_marginal_grad(params, obs_win, x, w, p0)
    return acc * (1.0 / n_samples) + log_prior_grad(params, prior)


def complete_data_loglik(params, obs_window, x, zf, p0=None):
    """log p(y, x, z) over one window, virtual latents included."""
    obs_window = np.atleast_2d(np.asarray(obs_window, dtype=float))
    pi0, mu0, V0 = _slds_p0(params, p0)
    zf = np.asarray(zf, dtype=int)
    z = zf[1:]
    with np.errstate(divide="ignore"):
        ll = np.log(pi0[zf[0]]) \
            + np.sum(np.log(params.Pi[zf[:-1], zf[1:]]))
    ll += _mvn_logpdf(x[0], mu0, V0)
    logf = _dynamics_log_factors(params, x)
    ll += logf[np.arange(len(z)), z].sum()
    e = (obs_window - x[1:] @ params.C.T) @ params.psi_r
    ll += len(obs_window) * (-0.5 * params.m * _LOG2PI
                             + np.sum(np.log(np.diag(params.psi_r))))
    ll -= 0.5 * np.sum(e * e)
    return float(ll)


def _collapsed_site_probs(params, obs_window, z, t, p0):
    """p(z_t = k | z_{-t}, y) by integrating the continuous path out."""
    pi0, mu0, V0 = p0
    Q = cov_from_chol_prec(params.psi_q)
    logw = np.empty(params.K)
    zc = np.array(z, dtype=int)
    for k in range(params.K):
        zc[t] = k
        fwd = kalman_forward_tv(params.A[zc], Q[zc], params.C, params.R,
                                obs_window, mu0, V0)
        prior = np.log(pi0 @ params.Pi)[zc[0]] \
            + np.sum(np.log(params.Pi[zc[:-1], zc[1:]]))
        logw[k] = prior + fwd.loglik
    p = np.exp(logw - logw.max())
    return p / p.sum()


def slds_collapsed_z_site(params, obs_window, z, t, seed, p0=None):
    """Resample one label from its collapsed conditional (validation
    sampler; quadratic in the window length when swept)."""
    obs_window = np.atleast_2d(np.asarray(obs_window, dtype=float))
    p0 = _slds_p0(params, p0)
    probs = _collapsed_site_probs(params, obs_window, z, t, p0)
    out = np.array(z, dtype=int)
    out[t] = _categorical(_rng(seed), probs)
    return out
