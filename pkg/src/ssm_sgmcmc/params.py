"""Model parameterizations, priors, and the constrained/unconstrained transform.

Four families are supported, identified by a short tag:

- ``hmm``    Gaussian-emission hidden Markov model
- ``arhmm``  autoregressive HMM (switching vector autoregression)
- ``lgssm``  linear-Gaussian state space model
- ``slds``   switching linear dynamical system

Transition matrices are carried as strictly positive expanded-mean weights
``phi``; row-normalizing ``phi`` yields the stochastic matrix ``Pi``.
Covariances are carried as lower-triangular Cholesky factors ``psi`` of the
*precision*: ``psi @ psi.T`` is the inverse covariance.  The unconstrained
parameterization maps positive coordinates (``phi`` entries, ``psi``
diagonals) through ``log`` and leaves everything else alone, so samplers can
take free Euclidean steps.  For ``lgssm``/``slds`` the leading
``min(n, m) x min(n, m)`` block of the emission matrix ``C`` is frozen to the
identity (the usual likelihood-symmetry pin); those entries carry no
unconstrained coordinates.

Gradients and unconstrained states travel as :class:`BlockVec`, a dict of
arrays keyed by block name in a fixed per-family order.  For ``psi`` blocks
the array uses the matrix layout with zeros above the diagonal; diagonal
slots hold the log-diagonal coordinate (state) or its gradient.
"""

import dataclasses

import numpy as np
from scipy.special import gammaln, multigammaln

FAMILIES = ("hmm", "arhmm", "lgssm", "slds")

_BLOCK_ORDER = {
    "hmm": ("phi", "mu", "psi_sigma"),
    "arhmm": ("phi", "A", "psi_q"),
    "lgssm": ("A", "psi_q", "C", "psi_r"),
    "slds": ("phi", "A", "psi_q", "C", "psi_r"),
}


class BlockVec(dict):
    """Per-block arrays with vector-space arithmetic.

    Used for gradients and for unconstrained parameter states.  Keys are
    block names, values are float arrays; arithmetic is elementwise and
    requires matching keys.
    """

    def copy(self):
        return BlockVec({k: v.copy() for k, v in self.items()})

    def __add__(self, other):
        return BlockVec({k: self[k] + other[k] for k in self})

    def __sub__(self, other):
        return BlockVec({k: self[k] - other[k] for k in self})

    def __mul__(self, c):
        return BlockVec({k: self[k] * c for k in self})

    __rmul__ = __mul__

    def __neg__(self):
        return BlockVec({k: -self[k] for k in self})

    def dot(self, other):
        return float(sum(np.sum(self[k] * other[k]) for k in self))

    def norm(self):
        return float(np.sqrt(sum(np.sum(v * v) for v in self.values())))

    def allfinite(self):
        return all(np.all(np.isfinite(v)) for v in self.values())


def _as_float(x):
    return np.array(x, dtype=float)


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite entries in parameter block '{name}'")


def _check_chol(name, psi):
    """psi: (..., d, d) lower-triangular with strictly positive diagonal."""
    _check_finite(name, psi)
    if psi.shape[-1] != psi.shape[-2]:
        raise ValueError(f"'{name}' must be square, got shape {psi.shape}")
    d = psi.shape[-1]
    if np.any(np.triu(psi, 1) != 0.0):
        raise ValueError(f"'{name}' must be lower-triangular")
    diag = np.diagonal(psi, axis1=-2, axis2=-1)
    if np.any(diag <= 0.0):
        raise ValueError(f"'{name}' must have strictly positive diagonal")
    return d


def _check_phi(phi):
    _check_finite("phi", phi)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise ValueError(f"'phi' must be square, got shape {phi.shape}")
    if np.any(phi <= 0.0):
        raise ValueError("'phi' entries must be strictly positive")


def _check_frozen_C(C):
    _check_finite("C", C)
    r = min(C.shape)
    if not np.array_equal(C[:r, :r], np.eye(r)):
        raise ValueError(
            f"leading {r}x{r} block of 'C' must be the identity (frozen)")


def identity_C(m, n):
    """Emission matrix with the frozen identity block and zeros elsewhere."""
    C = np.zeros((m, n))
    r = min(m, n)
    C[:r, :r] = np.eye(r)
    return C


def cov_from_chol_prec(psi):
    """Covariance from a Cholesky factor of the precision (batched ok)."""
    lam = psi @ np.swapaxes(psi, -1, -2)
    return np.linalg.inv(lam)


def prec_from_chol(psi):
    return psi @ np.swapaxes(psi, -1, -2)


def chol_cov_from_chol_prec(psi):
    """A square root F of the covariance: F F^T = (psi psi^T)^{-1}.

    F = psi^{-T} (upper triangular); fine as a noise factor.
    """
    eye = np.broadcast_to(np.eye(psi.shape[-1]), psi.shape)
    return np.swapaxes(np.linalg.solve(psi, eye), -1, -2)


@dataclasses.dataclass(frozen=True)
class HMMParams:
    """Gaussian-emission HMM: ``phi`` (K,K), ``mu`` (K,m), ``psi_sigma`` (K,m,m)."""

    phi: np.ndarray
    mu: np.ndarray
    psi_sigma: np.ndarray
    family = "hmm"

    def __post_init__(self):
        object.__setattr__(self, "phi", _as_float(self.phi))
        object.__setattr__(self, "mu", _as_float(self.mu))
        object.__setattr__(self, "psi_sigma", _as_float(self.psi_sigma))
        _check_phi(self.phi)
        _check_finite("mu", self.mu)
        _check_chol("psi_sigma", self.psi_sigma)
        if not (self.mu.shape[0] == self.phi.shape[0] == self.psi_sigma.shape[0]):
            raise ValueError("inconsistent number of latent states K across blocks")
        if self.mu.shape[1] != self.psi_sigma.shape[-1]:
            raise ValueError("emission dimension mismatch between mu and psi_sigma")

    @property
    def K(self):
        return self.phi.shape[0]

    @property
    def m(self):
        return self.mu.shape[1]

    @property
    def Pi(self):
        return self.phi / self.phi.sum(axis=1, keepdims=True)

    @property
    def Sigma(self):
        return cov_from_chol_prec(self.psi_sigma)

    def blocks(self):
        return {"phi": self.phi, "mu": self.mu, "psi_sigma": self.psi_sigma}


@dataclasses.dataclass(frozen=True)
class ARHMMParams:
    """Switching VAR: ``phi`` (K,K), ``A`` (K,m,m*p), ``psi_q`` (K,m,m)."""

    phi: np.ndarray
    A: np.ndarray
    psi_q: np.ndarray
    family = "arhmm"

    def __post_init__(self):
        object.__setattr__(self, "phi", _as_float(self.phi))
        object.__setattr__(self, "A", _as_float(self.A))
        object.__setattr__(self, "psi_q", _as_float(self.psi_q))
        _check_phi(self.phi)
        _check_finite("A", self.A)
        _check_chol("psi_q", self.psi_q)
        m = self.psi_q.shape[-1]
        if self.A.shape[1] != m or self.A.shape[2] % m != 0:
            raise ValueError(
                f"'A' must have shape (K, m, m*p); got {self.A.shape} with m={m}")
        if not (self.A.shape[0] == self.phi.shape[0] == self.psi_q.shape[0]):
            raise ValueError("inconsistent number of latent states K across blocks")

    @property
    def K(self):
        return self.phi.shape[0]

    @property
    def m(self):
        return self.psi_q.shape[-1]

    @property
    def p(self):
        return self.A.shape[2] // self.m

    @property
    def Pi(self):
        return self.phi / self.phi.sum(axis=1, keepdims=True)

    @property
    def Q(self):
        return cov_from_chol_prec(self.psi_q)

    def blocks(self):
        return {"phi": self.phi, "A": self.A, "psi_q": self.psi_q}


@dataclasses.dataclass(frozen=True)
class LGSSMParams:
    """Linear-Gaussian SSM: ``A`` (n,n), ``psi_q`` (n,n), ``C`` (m,n), ``psi_r`` (m,m).

    The leading min(n, m) square block of ``C`` is frozen to the identity.
    """

    A: np.ndarray
    psi_q: np.ndarray
    C: np.ndarray
    psi_r: np.ndarray
    family = "lgssm"

    def __post_init__(self):
        for f in ("A", "psi_q", "C", "psi_r"):
            object.__setattr__(self, f, _as_float(getattr(self, f)))
        _check_finite("A", self.A)
        _check_chol("psi_q", self.psi_q)
        _check_chol("psi_r", self.psi_r)
        _check_frozen_C(self.C)
        n = self.psi_q.shape[-1]
        m = self.psi_r.shape[-1]
        if self.A.shape != (n, n):
            raise ValueError(f"'A' must be ({n},{n}), got {self.A.shape}")
        if self.C.shape != (m, n):
            raise ValueError(f"'C' must be ({m},{n}), got {self.C.shape}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def Q(self):
        return cov_from_chol_prec(self.psi_q)

    @property
    def R(self):
        return cov_from_chol_prec(self.psi_r)

    def blocks(self):
        return {"A": self.A, "psi_q": self.psi_q, "C": self.C, "psi_r": self.psi_r}


@dataclasses.dataclass(frozen=True)
class SLDSParams:
    """Switching LGSSM: per-state (``A``, ``psi_q``) plus shared ``C``, ``psi_r``."""

    phi: np.ndarray
    A: np.ndarray
    psi_q: np.ndarray
    C: np.ndarray
    psi_r: np.ndarray
    family = "slds"

    def __post_init__(self):
        for f in ("phi", "A", "psi_q", "C", "psi_r"):
            object.__setattr__(self, f, _as_float(getattr(self, f)))
        _check_phi(self.phi)
        _check_finite("A", self.A)
        _check_chol("psi_q", self.psi_q)
        _check_chol("psi_r", self.psi_r)
        _check_frozen_C(self.C)
        n = self.psi_q.shape[-1]
        if self.A.shape != (self.phi.shape[0], n, n):
            raise ValueError(f"'A' must be (K,{n},{n}), got {self.A.shape}")
        if self.C.shape[1] != n:
            raise ValueError("latent dimension mismatch between C and psi_q")
        if self.C.shape[0] != self.psi_r.shape[-1]:
            raise ValueError("emission dimension mismatch between C and psi_r")

    @property
    def K(self):
        return self.phi.shape[0]

    @property
    def n(self):
        return self.A.shape[-1]

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def Pi(self):
        return self.phi / self.phi.sum(axis=1, keepdims=True)

    @property
    def Q(self):
        return cov_from_chol_prec(self.psi_q)

    @property
    def R(self):
        return cov_from_chol_prec(self.psi_r)

    def blocks(self):
        return {"phi": self.phi, "A": self.A, "psi_q": self.psi_q,
                "C": self.C, "psi_r": self.psi_r}


_PARAM_CLASSES = {"hmm": HMMParams, "arhmm": ARHMMParams,
                  "lgssm": LGSSMParams, "slds": SLDSParams}


def param_class(family):
    try:
        return _PARAM_CLASSES[family]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}; "
                         f"expected one of {FAMILIES}") from None


def block_order(family):
    return _BLOCK_ORDER[family]


# ---------------------------------------------------------------------------
# constrained <-> unconstrained transform


def _psi_to_u(psi):
    u = np.tril(psi).copy()
    d = psi.shape[-1]
    idx = np.arange(d)
    u[..., idx, idx] = np.log(psi[..., idx, idx])
    return u


def _u_to_psi(u):
    psi = np.tril(u).copy()
    d = u.shape[-1]
    idx = np.arange(d)
    psi[..., idx, idx] = np.exp(u[..., idx, idx])
    return psi


def unconstrain(params):
    """Map a params object to its unconstrained :class:`BlockVec`.

    log of ``phi`` entries and of ``psi`` diagonals; ``mu``/``A``/``C`` pass
    through.  The frozen identity block of ``C`` is carried verbatim (it has
    no free coordinates; see :func:`coord_mask`).
    """
    out = BlockVec()
    for name, arr in params.blocks().items():
        if name == "phi":
            out[name] = np.log(arr)
        elif name.startswith("psi"):
            out[name] = _psi_to_u(arr)
        else:
            out[name] = arr.copy()
    return out


def constrain(family, u):
    """Inverse of :func:`unconstrain`; re-stamps the frozen block of ``C``."""
    kw = {}
    for name, arr in u.items():
        if name == "phi":
            kw[name] = np.exp(arr)
        elif name.startswith("psi"):
            kw[name] = _u_to_psi(arr)
        elif name == "C":
            C = arr.copy()
            r = min(C.shape)
            C[:r, :r] = np.eye(r)
            kw[name] = C
        else:
            kw[name] = arr.copy()
    return param_class(family)(**kw)


def coord_mask(params):
    """Boolean arrays marking the free coordinates of each block.

    ``psi`` blocks are free on the lower triangle (diagonal included); the
    frozen identity block of ``C`` is excluded; everything else is free.
    """
    masks = BlockVec()
    for name, arr in params.blocks().items():
        if name.startswith("psi"):
            d = arr.shape[-1]
            tril = np.tril(np.ones((d, d), dtype=bool))
            masks[name] = np.broadcast_to(tril, arr.shape).copy()
        elif name == "C":
            mask = np.ones(arr.shape, dtype=bool)
            r = min(arr.shape)
            mask[:r, :r] = False
            masks[name] = mask
        else:
            masks[name] = np.ones(arr.shape, dtype=bool)
    return masks


def flatten(bv, masks):
    """Concatenate the free coordinates of ``bv`` into one vector."""
    return np.concatenate([bv[k][masks[k]] for k in bv])


def unflatten(vec, masks, like):
    """Inverse of :func:`flatten`; fills non-free slots from ``like``."""
    out = like.copy()
    pos = 0
    for k in out:
        idx = masks[k]
        cnt = int(idx.sum())
        arr = out[k]
        arr[idx] = vec[pos:pos + cnt]
        pos += cnt
    if pos != vec.size:
        raise ValueError(f"flat vector length {vec.size} does not match layout {pos}")
    return out


def n_free_coords(params):
    masks = coord_mask(params)
    return int(sum(m.sum() for m in masks.values()))


def grad_chol_unconstrained(G, psi):
    """Map a full-matrix derivative d/d(psi) to unconstrained coordinates.

    Keeps the lower triangle, chain-rules the diagonal through the log
    transform (multiply by psi_ii), zeroes the strict upper triangle.
    Batched over leading axes.
    """
    out = np.tril(G).astype(float, copy=True)
    d = psi.shape[-1]
    idx = np.arange(d)
    out[..., idx, idx] = G[..., idx, idx] * psi[..., idx, idx]
    return out


def zero_grad(params):
    """A BlockVec of zeros in the gradient layout of ``params``."""
    return BlockVec({k: np.zeros_like(v) for k, v in params.blocks().items()})


# ---------------------------------------------------------------------------
# priors


@dataclasses.dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the default conjugate-style prior.

    dirichlet_alpha
        Shape of the independent Gamma(alpha, 1) prior on each ``phi`` entry
        (row-normalization then gives Dirichlet(alpha) transition rows).
        Scalar or K x K array.
    matnormal_mean, matnormal_col_var
        Matrix-normal prior on dynamics blocks: ``A ~ MN(M, U=Q, V=c*I)``
        with row covariance tied to the state noise.  The same form (one
        column) is used for HMM emission means, ``mu ~ N(M, c * Sigma_k)``.
    wishart_nu, wishart_psi
        Wishart prior on precision blocks ``W = psi psi^T``:
        ``log p(W) = (nu-d-1)/2 log|W| - tr(Psi W)/2 + const`` — note ``Psi``
        is the *inverse* scale.  ``None`` defaults to ``nu = d+1`` and
        ``Psi = nu * I`` (so E[W] = I).

    The emission matrix ``C`` gets a flat (improper) prior on its free
    entries.
    """

    dirichlet_alpha: float = 1.0
    matnormal_mean: float = 0.0
    matnormal_col_var: float = 100.0
    wishart_nu: float = None
    wishart_psi: float = None

    def nu(self, d):
        return float(self.wishart_nu) if self.wishart_nu is not None else d + 1.0

    def inv_scale(self, d):
        """Inverse scale matrix Psi as a (d, d) array."""
        if self.wishart_psi is None:
            return self.nu(d) * np.eye(d)
        P = np.asarray(self.wishart_psi, dtype=float)
        if P.ndim == 0:
            return float(P) * np.eye(d)
        return P

    def matnormal_M(self, shape):
        M = np.asarray(self.matnormal_mean, dtype=float)
        if M.ndim == 0:
            return np.full(shape, float(M))
        return np.broadcast_to(M, shape)


_LOG2PI = np.log(2.0 * np.pi)


def _gamma_logp_u(phi, alpha):
    # Gamma(alpha, 1) per entry, with the log-transform Jacobian folded in:
    # alpha*log(phi) - phi - log Gamma(alpha), per entry.
    a = np.broadcast_to(np.asarray(alpha, dtype=float), phi.shape)
    return float(np.sum(a * np.log(phi) - phi - gammaln(a)))


def _matnormal_logp(X, M, psi_row, c):
    """log MN(X | M, U=(psi psi^T)^{-1}, V=c*I), X of shape (d, q)."""
    d, q = X.shape
    delta = X - M
    quad = np.sum((psi_row.T @ delta) ** 2)
    logdiag = np.sum(np.log(np.diag(psi_row)))
    return (-0.5 * quad / c + q * logdiag
            - 0.5 * d * q * (np.log(c) + _LOG2PI))


def _wishart_logp_u(psi, nu, Psi):
    """log density of W = psi psi^T under Wishart(nu, inverse scale Psi),
    expressed in the unconstrained (lower-tri, log-diagonal) coordinates
    (change-of-variables Jacobians included)."""
    d = psi.shape[-1]
    logdiag = np.log(np.diag(psi))
    logdetW = 2.0 * np.sum(logdiag)
    trPW = float(np.sum(psi * (Psi @ psi)))
    sign, logdetPsi = np.linalg.slogdet(Psi)
    if sign <= 0:
        raise ValueError("Wishart inverse scale must be positive definite")
    lp = (0.5 * (nu - d - 1) * logdetW - 0.5 * trPW
          - 0.5 * nu * d * np.log(2.0) + 0.5 * nu * logdetPsi
          - multigammaln(0.5 * nu, d))
    # Jacobian of W -> psi (2^d prod psi_ii^{d-i+1}) and psi_ii -> log psi_ii.
    jac = d * np.log(2.0) + float(np.sum((d - np.arange(d) + 1) * logdiag))
    return float(lp + jac)


def _wishart_grad_u(psi, nu, Psi):
    d = psi.shape[-1]
    G = np.tril(-(Psi @ psi))
    idx = np.arange(d)
    G[idx, idx] = -(Psi @ psi)[idx, idx] * psi[idx, idx] + nu - idx
    return G


def log_prior(params, prior=None):
    """Log prior density in the unconstrained parameterization.

    Includes all change-of-variables Jacobians, so finite differences of
    this function match :func:`log_prior_grad` coordinate-for-coordinate.
    """
    if prior is None:
        prior = PriorSpec()
    c = prior.matnormal_col_var
    lp = 0.0
    fam = params.family
    if fam in ("hmm", "arhmm", "slds"):
        lp += _gamma_logp_u(params.phi, prior.dirichlet_alpha)
    if fam == "hmm":
        for k in range(params.K):
            M = prior.matnormal_M((params.m, 1))
            lp += _matnormal_logp(params.mu[k][:, None], M, params.psi_sigma[k], c)
            nu = prior.nu(params.m)
            lp += _wishart_logp_u(params.psi_sigma[k], nu, prior.inv_scale(params.m))
    elif fam == "arhmm":
        for k in range(params.K):
            M = prior.matnormal_M(params.A[k].shape)
            lp += _matnormal_logp(params.A[k], M, params.psi_q[k], c)
            nu = prior.nu(params.m)
            lp += _wishart_logp_u(params.psi_q[k], nu, prior.inv_scale(params.m))
    elif fam == "lgssm":
        M = prior.matnormal_M(params.A.shape)
        lp += _matnormal_logp(params.A, M, params.psi_q, c)
        lp += _wishart_logp_u(params.psi_q, prior.nu(params.n), prior.inv_scale(params.n))
        lp += _wishart_logp_u(params.psi_r, prior.nu(params.m), prior.inv_scale(params.m))
        # C: flat prior on free entries.
    elif fam == "slds":
        for k in range(params.K):
            M = prior.matnormal_M(params.A[k].shape)
            lp += _matnormal_logp(params.A[k], M, params.psi_q[k], c)
            lp += _wishart_logp_u(params.psi_q[k], prior.nu(params.n),
                                  prior.inv_scale(params.n))
        lp += _wishart_logp_u(params.psi_r, prior.nu(params.m), prior.inv_scale(params.m))
    else:
        raise ValueError(f"unknown family {fam!r}")
    return float(lp)


def log_prior_grad(params, prior=None):
    """Gradient of :func:`log_prior` in the unconstrained layout."""
    if prior is None:
        prior = PriorSpec()
    c = prior.matnormal_col_var
    g = zero_grad(params)
    fam = params.family

    if "phi" in g:
        a = np.broadcast_to(np.asarray(prior.dirichlet_alpha, dtype=float),
                            params.phi.shape)
        g["phi"] = a - params.phi

    def matnormal_terms(X, M, psi):
        """Gradient wrt X (linear coords) and the coupled psi block."""
        delta = X - M
        lam = psi @ psi.T
        gX = -(lam @ delta) / c
        q = X.shape[1]
        # d/dpsi of -tr(delta^T psi psi^T delta)/(2c) + q*sum log psi_ii
        Gc = -(delta @ delta.T @ psi) / c
        Gu = grad_chol_unconstrained(Gc, psi)
        idx = np.arange(psi.shape[0])
        Gu[idx, idx] += q
        return gX, Gu

    if fam == "hmm":
        for k in range(params.K):
            M = prior.matnormal_M((params.m, 1))
            gmu, gpsi = matnormal_terms(params.mu[k][:, None], M,
                                        params.psi_sigma[k])
            g["mu"][k] = gmu[:, 0]
            g["psi_sigma"][k] = gpsi + _wishart_grad_u(
                params.psi_sigma[k], prior.nu(params.m), prior.inv_scale(params.m))
    elif fam == "arhmm":
        for k in range(params.K):
            M = prior.matnormal_M(params.A[k].shape)
            gA, gpsi = matnormal_terms(params.A[k], M, params.psi_q[k])
            g["A"][k] = gA
            g["psi_q"][k] = gpsi + _wishart_grad_u(
                params.psi_q[k], prior.nu(params.m), prior.inv_scale(params.m))
    elif fam == "lgssm":
        M = prior.matnormal_M(params.A.shape)
        gA, gpsi = matnormal_terms(params.A, M, params.psi_q)
        g["A"] = gA
        g["psi_q"] = gpsi + _wishart_grad_u(
            params.psi_q, prior.nu(params.n), prior.inv_scale(params.n))
        g["psi_r"] = _wishart_grad_u(
            params.psi_r, prior.nu(params.m), prior.inv_scale(params.m))
    elif fam == "slds":
        for k in range(params.K):
            M = prior.matnormal_M(params.A[k].shape)
            gA, gpsi = matnormal_terms(params.A[k], M, params.psi_q[k])
            g["A"][k] = gA
            g["psi_q"][k] = gpsi + _wishart_grad_u(
                params.psi_q[k], prior.nu(params.n), prior.inv_scale(params.n))
        g["psi_r"] = _wishart_grad_u(
            params.psi_r, prior.nu(params.m), prior.inv_scale(params.m))
    else:
        raise ValueError(f"unknown family {fam!r}")
    return g


# ---------------------------------------------------------------------------
# flat views of the constrained parameters (trace columns, MSE, KSD)


def constrained_labels(params):
    """Stable column names, one per entry of every block array."""
    labels = []
    for name, arr in params.blocks().items():
        for idx in np.ndindex(arr.shape):
            labels.append(f"{name}[{','.join(map(str, idx))}]")
    return labels


def constrained_values(params):
    return np.concatenate([arr.ravel() for arr in params.blocks().values()])


def params_from_constrained(family, values, like):
    """Rebuild a params object from :func:`constrained_values` output."""
    kw = {}
    pos = 0
    for name, arr in like.blocks().items():
        cnt = arr.size
        kw[name] = np.asarray(values[pos:pos + cnt], dtype=float).reshape(arr.shape)
        pos += cnt
    if pos != len(values):
        raise ValueError("flat constrained vector does not match layout")
    return param_class(family)(**kw)
