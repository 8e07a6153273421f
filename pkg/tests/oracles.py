"""Independent reference implementations used to validate the package.

Everything here deliberately avoids the package's own message-passing and
gradient code: discrete posteriors are computed by exhaustive path
enumeration, Gaussian posteriors by assembling the full joint covariance and
conditioning with Schur complements, and gradients by central finite
differences through the public constrain/unconstrain maps.
"""

import itertools

import numpy as np

from ssm_sgmcmc.params import (
    constrain,
    coord_mask,
    flatten,
    unconstrain,
    unflatten,
)


def rel_err(a, b, floor=1e-10):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), floor)
    return np.max(np.abs(a - b)) / denom


def mvn_logpdf(y, mean, cov):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, y - mean)
    return (-0.5 * len(y) * np.log(2 * np.pi)
            - np.log(np.diag(L)).sum() - 0.5 * z @ z)


# ---------------------------------------------------------------------------
# discrete chains: exhaustive path enumeration

def enumerate_discrete(Pi, p0, log_emissions):
    """Posterior of a discrete chain entered through a virtual pre-window state.

    The joint being enumerated is p0(z_v) * prod_t Pi[z_{t-1}, z_t] *
    exp(log_emissions[t, z_t]) over paths (z_v, z_0, ..., z_{W-1}).

    Returns
    -------
    loglik : float
    gamma : (W, K) marginals of z_t
    pairwise : (W, K, K) marginals of (z_{t-1}, z_t); index 0 couples z_v.
    """
    Pi = np.asarray(Pi, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    K = Pi.shape[0]
    W = log_emissions.shape[0]
    with np.errstate(divide="ignore"):
        logPi = np.log(Pi)
        logp0 = np.log(p0)
    paths = list(itertools.product(range(K), repeat=W + 1))
    logw = np.empty(len(paths))
    for i, path in enumerate(paths):
        lw = logp0[path[0]]
        for t in range(W):
            lw += logPi[path[t], path[t + 1]] + log_emissions[t, path[t + 1]]
        logw[i] = lw
    M = logw.max()
    w = np.exp(logw - M)
    Z = w.sum()
    loglik = M + np.log(Z)
    w /= Z
    gamma = np.zeros((W, K))
    pairwise = np.zeros((W, K, K))
    for wi, path in zip(w, paths):
        for t in range(W):
            gamma[t, path[t + 1]] += wi
            pairwise[t, path[t], path[t + 1]] += wi
    return loglik, gamma, pairwise


# ---------------------------------------------------------------------------
# linear-Gaussian chains: joint covariance + Schur-complement conditioning

def lgssm_joint_moments(A, Q, C, R, mu0, V0, W):
    """Mean and covariance of the stacked vector (x_v, x_0..x_{W-1}, y_0..y_{W-1}).

    x_v ~ N(mu0, V0) is the virtual pre-window state, x_t = A x_{t-1} + w_t,
    y_t = C x_t + v_t.
    """
    A, Q, C, R = (np.asarray(M, dtype=float) for M in (A, Q, C, R))
    n = A.shape[0]
    m = C.shape[0]
    mean_x = np.zeros((W + 1, n))
    mean_x[0] = mu0
    covX = np.zeros((W + 1, W + 1, n, n))
    covX[0, 0] = V0
    for t in range(1, W + 1):
        mean_x[t] = A @ mean_x[t - 1]
        covX[t, t] = A @ covX[t - 1, t - 1] @ A.T + Q
        for s in range(t):
            covX[s, t] = covX[s, t - 1] @ A.T
            covX[t, s] = covX[s, t].T
    nx = (W + 1) * n
    ny = W * m
    mean = np.zeros(nx + ny)
    cov = np.zeros((nx + ny, nx + ny))
    for s in range(W + 1):
        mean[s * n:(s + 1) * n] = mean_x[s]
        for t in range(W + 1):
            cov[s * n:(s + 1) * n, t * n:(t + 1) * n] = covX[s, t]
    for t in range(W):
        yi = nx + t * m
        mean[yi:yi + m] = C @ mean_x[t + 1]
        for s in range(W + 1):
            blk = covX[s, t + 1] @ C.T
            cov[s * n:(s + 1) * n, yi:yi + m] = blk
            cov[yi:yi + m, s * n:(s + 1) * n] = blk.T
        for u in range(W):
            yj = nx + u * m
            cov[yi:yi + m, yj:yj + m] = C @ covX[t + 1, u + 1] @ C.T
            if u == t:
                cov[yi:yi + m, yj:yj + m] += R
    return mean, cov, nx


def lgssm_posterior_oracle(A, Q, C, R, mu0, V0, obs):
    """Exact smoothing via joint-Gaussian conditioning.

    Returns (loglik, post_mean, post_cov) where post_mean has shape
    ((W+1)*n,) covering (x_v, x_0..x_{W-1}) and post_cov the matching joint
    covariance.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    W = obs.shape[0]
    mean, cov, nx = lgssm_joint_moments(A, Q, C, R, mu0, V0, W)
    y = obs.ravel()
    m_y = mean[nx:]
    S_yy = cov[nx:, nx:]
    S_xy = cov[:nx, nx:]
    sol = np.linalg.solve(S_yy, y - m_y)
    post_mean = mean[:nx] + S_xy @ sol
    post_cov = cov[:nx, :nx] - S_xy @ np.linalg.solve(S_yy, S_xy.T)
    loglik = mvn_logpdf(y, m_y, S_yy)
    return loglik, post_mean, post_cov


# ---------------------------------------------------------------------------
# emission densities straight from scipy (independent of the package's own)

def oracle_log_emissions(params, obs, context=None):
    """(W, K) per-state emission log densities via scipy.stats."""
    from scipy.stats import multivariate_normal

    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    W = obs.shape[0]
    K = params.K
    out = np.empty((W, K))
    if params.family == "hmm":
        Sigma = np.linalg.inv(params.psi_sigma @
                              np.swapaxes(params.psi_sigma, -1, -2))
        for k in range(K):
            out[:, k] = multivariate_normal.logpdf(obs, mean=params.mu[k],
                                                   cov=Sigma[k])
        return out.reshape(W, K)
    if params.family == "arhmm":
        Q = np.linalg.inv(params.psi_q @ np.swapaxes(params.psi_q, -1, -2))
        m, p = params.m, params.p
        hist = list(np.zeros((p, m)) if context is None else
                    np.concatenate([np.zeros((max(0, p - len(context)), m)),
                                    np.asarray(context, dtype=float)[-p:]]))
        for t in range(W):
            ybar = np.concatenate([hist[-lag] for lag in range(1, p + 1)])
            for k in range(K):
                out[t, k] = multivariate_normal.logpdf(
                    obs[t], mean=params.A[k] @ ybar, cov=Q[k])
            hist.append(obs[t])
        return out
    raise ValueError(params.family)


# ---------------------------------------------------------------------------
# finite differences

def fd_gradient(f, params, eps=1e-6):
    """Central finite differences of scalar f(params) in unconstrained coords.

    Returns a BlockVec matching the package's gradient layout (zeros at
    inactive coordinates).
    """
    from ssm_sgmcmc.params import BlockVec

    u = unconstrain(params)
    masks = coord_mask(params)
    vec = flatten(u, masks)
    fam = params.family
    g = np.zeros_like(vec)
    for i in range(len(vec)):
        vp = vec.copy()
        vp[i] += eps
        vm = vec.copy()
        vm[i] -= eps
        fp = f(constrain(fam, unflatten(vp, masks, u)))
        fm = f(constrain(fam, unflatten(vm, masks, u)))
        g[i] = (fp - fm) / (2.0 * eps)
    zeros = BlockVec({k: np.zeros_like(v) for k, v in u.items()})
    return unflatten(g, masks, zeros)


def fd_divergence(D_fn, vec0, eps=1e-6):
    """Gamma_i = sum_j dD_ij/dtheta_j by central differences.

    D_fn maps a flat coordinate vector to the dense D matrix over those
    coordinates.
    """
    vec0 = np.asarray(vec0, dtype=float)
    G = np.zeros(len(vec0))
    for j in range(len(vec0)):
        vp = vec0.copy()
        vp[j] += eps
        vm = vec0.copy()
        vm[j] -= eps
        dD = (D_fn(vp) - D_fn(vm)) / (2.0 * eps)
        G += dD[:, j]
    return G


# ---------------------------------------------------------------------------
# subsequence enumeration

def uniform_starts(T, S):
    return list(range(T - S + 1))


def inclusion_probs_by_enumeration(T, S):
    counts = np.zeros(T)
    for s in uniform_starts(T, S):
        counts[s:s + S] += 1
    return counts / (T - S + 1)


# ---------------------------------------------------------------------------
# random valid parameters

def random_tril(rng, d, lo=0.7, hi=1.4):
    L = np.tril(0.3 * rng.standard_normal((d, d)), -1)
    L[np.diag_indices(d)] = rng.uniform(lo, hi, size=d)
    return L


def random_params(family, rng, K=2, m=2, n=2, p=1):
    from ssm_sgmcmc.params import (ARHMMParams, HMMParams, LGSSMParams,
                                   SLDSParams, identity_C)
    if family == "hmm":
        return HMMParams(
            phi=rng.gamma(3.0, size=(K, K)) + 0.3,
            mu=rng.standard_normal((K, m)),
            psi_sigma=np.stack([random_tril(rng, m) for _ in range(K)]))
    if family == "arhmm":
        return ARHMMParams(
            phi=rng.gamma(3.0, size=(K, K)) + 0.3,
            A=0.4 * rng.standard_normal((K, m, m * p)),
            psi_q=np.stack([random_tril(rng, m) for _ in range(K)]))
    if family == "lgssm":
        C = identity_C(m, n)
        r = min(m, n)
        free = rng.standard_normal((m, n)) * 0.3
        free[:r, :r] = 0.0
        return LGSSMParams(
            A=0.4 * rng.standard_normal((n, n)),
            psi_q=random_tril(rng, n),
            C=C + free,
            psi_r=random_tril(rng, m))
    if family == "slds":
        C = identity_C(m, n)
        r = min(m, n)
        free = rng.standard_normal((m, n)) * 0.3
        free[:r, :r] = 0.0
        return SLDSParams(
            phi=rng.gamma(3.0, size=(K, K)) + 0.3,
            A=0.4 * rng.standard_normal((K, n, n)),
            psi_q=np.stack([random_tril(rng, n) for _ in range(K)]),
            C=C + free,
            psi_r=random_tril(rng, m))
    raise ValueError(family)
