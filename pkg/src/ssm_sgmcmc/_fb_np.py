"""Pure-numpy forward-backward kernel (fallback for the compiled extension)."""

import numpy as np


def fb_pass(P, Pi, p0):
    """Scaled linear-domain forward-backward recursions.

    Parameters
    ----------
    P : (W, K) nonnegative emission likelihoods, any per-row scaling.
    Pi : (K, K) row-stochastic transition matrix.
    p0 : (K,) distribution of the virtual pre-window state.

    Returns
    -------
    alpha : (W, K) filtered distributions (each row sums to 1).
    beta : (W, K) backward messages scaled so that gamma_t = alpha_t * beta_t.
    c : (W,) per-step normalizers in the scaled domain.
    """
    W, K = P.shape
    alpha = np.empty((W, K))
    c = np.empty(W)
    a = (p0 @ Pi) * P[0]
    c[0] = a.sum()
    if not c[0] > 0.0 or not np.isfinite(c[0]):
        raise ValueError("forward normalizer vanished or is non-finite at t=0")
    alpha[0] = a / c[0]
    for t in range(1, W):
        a = (alpha[t - 1] @ Pi) * P[t]
        c[t] = a.sum()
        if not c[t] > 0.0 or not np.isfinite(c[t]):
            raise ValueError(
                f"forward normalizer vanished or is non-finite at t={t}")
        alpha[t] = a / c[t]
    beta = np.empty((W, K))
    beta[W - 1] = 1.0
    for t in range(W - 2, -1, -1):
        beta[t] = Pi @ (P[t + 1] * beta[t + 1]) / c[t + 1]
    return alpha, beta, c
