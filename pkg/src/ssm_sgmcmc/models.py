"""Generative simulation, synthetic ground-truth presets, and initialization."""

import numpy as np
from scipy import stats

from ssm_sgmcmc.params import (
    ARHMMParams,
    HMMParams,
    LGSSMParams,
    SLDSParams,
    PriorSpec,
    chol_cov_from_chol_prec,
    identity_C,
)

# Strictly positive floor used when a preset transition matrix contains
# exact zeros: expanded-mean weights must stay positive.
_PHI_FLOOR = 1e-8


def stationary_dist(Pi, tol=1e-12, max_iter=100000):
    """Stationary distribution of a row-stochastic matrix by power iteration."""
    Pi = np.asarray(Pi, dtype=float)
    K = Pi.shape[0]
    pi = np.full(K, 1.0 / K)
    for _ in range(max_iter):
        new = pi @ Pi
        new /= new.sum()
        if np.max(np.abs(new - pi)) < tol:
            return new
        pi = new
    return pi


def steady_state_cov(A, Q, tol=1e-12, max_iter=1000):
    """Fixed point of V = Q + A V A^T.

    Falls back to 10*I when the dynamics are not stable (spectral radius
    of A >= 1), in which case no stationary covariance exists.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
        return 10.0 * np.eye(A.shape[0])
    V = Q.copy()
    for _ in range(max_iter):
        new = Q + A @ V @ A.T
        if np.max(np.abs(new - V)) < tol:
            V = new
            break
        V = new
    return 0.5 * (V + V.T)


def default_p0(params):
    """Initial latent distribution used for simulation and message passing.

    hmm/arhmm: stationary distribution of Pi.
    lgssm: (mean, cov) with zero mean and the steady-state covariance.
    slds: (pi0, mean, cov); the covariance averages the per-state
    steady-state solutions under pi0.
    """
    fam = params.family
    if fam in ("hmm", "arhmm"):
        return stationary_dist(params.Pi)
    if fam == "lgssm":
        V = steady_state_cov(params.A, params.Q)
        return np.zeros(params.n), V
    if fam == "slds":
        pi0 = stationary_dist(params.Pi)
        Q = params.Q
        V = sum(pi0[k] * steady_state_cov(params.A[k], Q[k])
                for k in range(params.K))
        return pi0, np.zeros(params.n), 0.5 * (V + V.T)
    raise ValueError(f"unknown family {params.family!r}")


def stack_lags(obs, p, context=None):
    """Lagged design rows ybar_t = [y_{t-1}, ..., y_{t-p}] for each t.

    ``context`` supplies up to ``p`` rows preceding ``obs`` (last row is
    y_{-1}); missing history is zero-padded.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    T, m = obs.shape
    if context is None:
        context = np.zeros((0, m))
    context = np.atleast_2d(np.asarray(context, dtype=float))
    padded = np.concatenate([np.zeros((max(0, p - len(context)), m)),
                             context[max(0, len(context) - p):], obs])
    out = np.empty((T, m * p))
    for lag in range(1, p + 1):
        out[:, (lag - 1) * m:lag * m] = padded[p - lag:p - lag + T]
    return out


def simulate(params, T, seed):
    """Draw (latents, obs) of length ``T`` from the generative model.

    The chain is seeded from :func:`default_p0` (a virtual pre-sample
    latent carries the initial distribution; the first returned latent is
    already one transition in).  Latents are ``z`` (ints) for hmm/arhmm,
    ``x`` for lgssm, and ``(z, x)`` for slds.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    fam = params.family

    if fam == "hmm":
        z = _sim_chain(params.Pi, stationary_dist(params.Pi), T, rng)
        F = chol_cov_from_chol_prec(params.psi_sigma)  # (K, m, m)
        eps = rng.standard_normal((T, params.m))
        obs = params.mu[z] + np.einsum("tij,tj->ti", F[z], eps)
        return z, obs

    if fam == "arhmm":
        z = _sim_chain(params.Pi, stationary_dist(params.Pi), T, rng)
        F = chol_cov_from_chol_prec(params.psi_q)
        m, p = params.m, params.p
        hist = np.zeros((p, m))  # zero-padded initial lag context
        obs = np.empty((T, m))
        for t in range(T):
            ybar = hist[::-1].ravel()  # most recent lag first
            obs[t] = params.A[z[t]] @ ybar + F[z[t]] @ rng.standard_normal(m)
            hist = np.vstack([hist[1:], obs[t]]) if p > 1 else obs[t][None, :]
        return z, obs

    if fam == "lgssm":
        mu0, V0 = default_p0(params)
        Fq = chol_cov_from_chol_prec(params.psi_q)
        Fr = chol_cov_from_chol_prec(params.psi_r)
        x = np.empty((T, params.n))
        prev = mu0 + np.linalg.cholesky(V0) @ rng.standard_normal(params.n)
        for t in range(T):
            prev = params.A @ prev + Fq @ rng.standard_normal(params.n)
            x[t] = prev
        obs = x @ params.C.T + rng.standard_normal((T, params.m)) @ Fr.T
        return x, obs

    if fam == "slds":
        pi0, mu0, V0 = default_p0(params)
        z = _sim_chain(params.Pi, pi0, T, rng)
        Fq = chol_cov_from_chol_prec(params.psi_q)
        Fr = chol_cov_from_chol_prec(params.psi_r)
        x = np.empty((T, params.n))
        prev = mu0 + np.linalg.cholesky(V0) @ rng.standard_normal(params.n)
        for t in range(T):
            prev = params.A[z[t]] @ prev + Fq[z[t]] @ rng.standard_normal(params.n)
            x[t] = prev
        obs = x @ params.C.T + rng.standard_normal((T, params.m)) @ Fr.T
        return (z, x), obs

    raise ValueError(f"unknown family {fam!r}")


def _sim_chain(Pi, p0, T, rng):
    K = Pi.shape[0]
    z = np.empty(T, dtype=int)
    prev = rng.choice(K, p=p0)  # virtual pre-sample state
    cum = np.cumsum(Pi, axis=1)
    u = rng.random(T)
    for t in range(T):
        prev = int(np.searchsorted(cum[prev], u[t]))
        z[t] = prev
    return z


def _rot(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def make_synthetic_star(family):
    """Ground-truth parameters of the built-in synthetic benchmarks.

    ``arhmm``/``slds``/``lgssm`` are 2-d two-state (or single-regime)
    systems; ``hmm`` (alias ``hmm8``) is an 8-state planar Gaussian HMM with
    two nearly-deterministic cycles traversed in opposite directions.
    """
    if family == "arhmm":
        Pi = np.array([[0.1, 0.9], [0.9, 0.1]])
        A = np.stack([0.9 * _rot(-np.pi / 4), 0.9 * _rot(np.pi / 4)])
        psi = np.stack([np.eye(2), np.eye(2)]) / np.sqrt(0.1)
        return ARHMMParams(phi=Pi, A=A, psi_q=psi)
    if family == "lgssm":
        return LGSSMParams(A=0.7 * _rot(np.pi / 4),
                           psi_q=np.eye(2) / np.sqrt(0.1),
                           C=np.eye(2),
                           psi_r=np.eye(2))
    if family == "slds":
        Pi = np.array([[0.9, 0.1], [0.1, 0.9]])
        A = np.stack([0.9 * _rot(-np.pi / 4), 0.9 * _rot(np.pi / 4)])
        return SLDSParams(phi=Pi, A=A,
                          psi_q=np.stack([np.eye(2), np.eye(2)]) / np.sqrt(0.1),
                          C=np.eye(2),
                          psi_r=np.eye(2) / np.sqrt(0.1))
    if family in ("hmm", "hmm8"):
        Pi = np.array([
            [0.01, 0.99, 0, 0, 0, 0, 0, 0],
            [0, 0.01, 0.99, 0, 0, 0, 0, 0],
            [0.85, 0, 0, 0.15, 0, 0, 0, 0],
            [0, 0, 0, 0, 1.0, 0, 0, 0],
            [0, 0, 0, 0, 0.01, 0.99, 0, 0],
            [0, 0, 0, 0, 0, 0.01, 0.99, 0],
            [0, 0, 0, 0, 0.85, 0, 0, 0.15],
            [1.0, 0, 0, 0, 0, 0, 0, 0],
        ])
        mu = np.array([[-50.0, 0.0], [30.0, -30.0], [30.0, 30.0],
                       [-100.0, -10.0], [40.0, -40.0], [-65.0, 0.0],
                       [40.0, 40.0], [100.0, 10.0]])
        phi = np.maximum(Pi, _PHI_FLOOR)
        psi = np.stack([np.eye(2)] * 8) / np.sqrt(20.0)
        return HMMParams(phi=phi, mu=mu, psi_sigma=psi)
    raise ValueError(f"no synthetic preset for family {family!r}")


# ---------------------------------------------------------------------------
# K-means (Lloyd's algorithm with k-means++ seeding)


def kmeans(X, K, seed, n_iter=100):
    """Cluster rows of X into K groups; returns (labels, centers).

    Empty clusters are re-seeded to the point farthest from its center.
    """
    X = np.asarray(X, dtype=float)
    rng = np.random.default_rng(seed)
    n = len(X)
    if K > n:
        raise ValueError(f"K={K} exceeds the number of observations {n}")
    # k-means++ seeding
    centers = [X[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min([np.sum((X - c) ** 2, axis=1) for c in centers], axis=0)
        tot = d2.sum()
        if tot <= 0:
            centers.append(X[rng.integers(n)])
            continue
        centers.append(X[rng.choice(n, p=d2 / tot)])
    centers = np.array(centers)
    labels = np.zeros(n, dtype=int)
    for _ in range(n_iter):
        d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        for k in range(K):
            sel = new_labels == k
            if sel.any():
                centers[k] = X[sel].mean(axis=0)
            else:
                worst = np.argmax(d2[np.arange(n), new_labels])
                centers[k] = X[worst]
                new_labels[worst] = k
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers


def _transition_phi(labels, K):
    counts = np.zeros((K, K))
    np.add.at(counts, (labels[:-1], labels[1:]), 1.0)
    return counts + 1.0  # smoothing keeps every weight positive


def _cluster_cov(X, ridge=1e-6):
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / max(len(X), 1)
    return S + ridge * np.eye(X.shape[1])


def _chol_prec(cov):
    return np.linalg.cholesky(np.linalg.inv(cov))


def _draw_wishart_chol(d, prior, rng):
    """Cholesky factor psi with psi psi^T ~ Wishart(nu, inverse scale Psi)."""
    nu = prior.nu(d)
    scale = np.linalg.inv(prior.inv_scale(d))
    W = stats.wishart(df=nu, scale=scale).rvs(random_state=rng)
    W = np.atleast_2d(W)
    return np.linalg.cholesky(W)


def init_params(family, obs, K, seed, prior=None, n=None, p=1):
    """Data-driven starting point for a sampler chain.

    hmm/arhmm/slds fit per-cluster statistics from a K-means labeling of
    the observations (lag-stacked for the dynamic families) and take
    transition weights from the empirical label transitions; lgssm draws
    from the prior.  slds draws its emission noise from the prior as well.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    if prior is None:
        prior = PriorSpec()
    rng = np.random.default_rng(seed)
    m = obs.shape[1]

    if family == "hmm":
        labels, centers = kmeans(obs, K, rng)
        psi = np.stack([_chol_prec(_cluster_cov(obs[labels == k]))
                        for k in range(K)])
        return HMMParams(phi=_transition_phi(labels, K), mu=centers,
                         psi_sigma=psi)

    if family == "arhmm":
        ybar = stack_lags(obs, p)
        labels, _ = kmeans(np.hstack([obs, ybar]), K, rng)
        A = np.empty((K, m, m * p))
        psi = np.empty((K, m, m))
        for k in range(K):
            sel = labels == k
            A[k] = _lstsq_dynamics(ybar[sel], obs[sel], m * p)
            resid = obs[sel] - ybar[sel] @ A[k].T
            psi[k] = _chol_prec(_resid_cov(resid, m))
        return ARHMMParams(phi=_transition_phi(labels, K), A=A, psi_q=psi)

    if family == "lgssm":
        if n is None:
            n = m
        psi_q = _draw_wishart_chol(n, prior, rng)
        psi_r = _draw_wishart_chol(m, prior, rng)
        Q = np.linalg.inv(psi_q @ psi_q.T)
        M = prior.matnormal_M((n, n))
        A = M + np.linalg.cholesky(Q) @ rng.standard_normal((n, n)) \
            * np.sqrt(prior.matnormal_col_var)
        return LGSSMParams(A=A, psi_q=psi_q, C=identity_C(m, n), psi_r=psi_r)

    if family == "slds":
        if n is None:
            n = m
        if n > m:
            raise ValueError("slds init needs latent dim n <= obs dim m")
        x_proxy = obs[:, :n]  # observation proxy for the latent path
        lag = stack_lags(x_proxy, 1)
        labels, _ = kmeans(np.hstack([x_proxy, lag]), K, rng)
        A = np.empty((K, n, n))
        psi_q = np.empty((K, n, n))
        for k in range(K):
            sel = labels == k
            A[k] = _lstsq_dynamics(lag[sel], x_proxy[sel], n)
            resid = x_proxy[sel] - lag[sel] @ A[k].T
            psi_q[k] = _chol_prec(_resid_cov(resid, n))
        psi_r = _draw_wishart_chol(m, prior, rng)
        return SLDSParams(phi=_transition_phi(labels, K), A=A, psi_q=psi_q,
                          C=identity_C(m, n), psi_r=psi_r)

    raise ValueError(f"unknown family {family!r}")


def _lstsq_dynamics(X, Y, q):
    """Least-squares Y ~ X A^T with a tiny ridge for rank safety."""
    if len(X) == 0:
        return np.zeros((Y.shape[1] if Y.ndim > 1 else 1, q))
    G = X.T @ X + 1e-8 * np.eye(X.shape[1])
    return np.linalg.solve(G, X.T @ Y).T


def _resid_cov(resid, m, ridge=1e-6):
    if len(resid) == 0:
        return np.eye(m)
    S = resid.T @ resid / len(resid)
    return S + ridge * np.eye(m)
