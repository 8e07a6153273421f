"""Langevin chain drivers.

One step in unconstrained coordinates:

    theta' = theta + h [D g + Gamma] + N(0, 2 h D)

with D the block metric (identity for the unpreconditioned kinds) and g a
gradient estimate of the log posterior.  No Metropolis correction is
applied; the discretization bias is controlled by the stepsize.  Kinds
``ld``/``rld`` use the exact full-data gradient every step, ``sgld``/
``sgrld`` a buffered-subsequence estimate.
"""

import dataclasses
import time

import numpy as np

from ssm_sgmcmc.estimators import (
    buffered_gradient,
    full_gradient,
    sample_subsequence,
)
from ssm_sgmcmc.models import default_p0
from ssm_sgmcmc.params import BlockVec, constrain, coord_mask, unconstrain
from ssm_sgmcmc.precond import (
    NU_PHI_DEFAULT,
    apply,
    identity_blocks,
    noise_factor,
    precondition,
)

KINDS = ("sgld", "sgrld", "ld", "rld")
ESTIMATORS = ("buffered", "xz", "z-marginal", "x-marginal")


@dataclasses.dataclass
class SamplerConfig:
    kind: str = "sgrld"
    h: float = 1e-4
    n_steps: int = 1000
    S: int = 10
    B: int = 0
    scheme: str = "uniform"
    schedule: str = "fixed"
    s0: float = 1000.0
    kappa: float = 0.55
    thin: int = 1
    seed: int = 0
    nu_phi: float = NU_PHI_DEFAULT
    estimator: str = None     # None -> buffered (xz for slds)
    n_samples: int = 1        # slds: recorded Gibbs pairs per gradient
    burn_in: int = 2          # slds: Gibbs warm-up sweeps per gradient
    adapt_every: int = 0      # re-select B every this many steps (0 = off)
    adapt_epsilon: float = 1e-2
    adapt_n_sub: int = 50
    adapt_B_star: int = 40

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.h <= 0:
            raise ValueError("stepsize h must be > 0")
        if self.S < 1 or self.B < 0:
            raise ValueError("need S >= 1 and B >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.schedule not in ("fixed", "poly"):
            raise ValueError("schedule must be 'fixed' or 'poly'")
        if self.estimator is not None and self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")

    def stepsize(self, s):
        if self.schedule == "fixed":
            return self.h
        return self.h * (1.0 + s / self.s0) ** (-self.kappa)


@dataclasses.dataclass
class Trace:
    """Retained samples (index 0 is the chain's initial state) plus
    per-step diagnostics.  ``wall_seconds`` is cumulative and aligned with
    ``samples``; it stays at 0.0 unless wall-clock recording is on."""

    samples: list
    wall_seconds: list
    grad_norms: list
    buffer_sizes: list
    config: SamplerConfig
    error: str = None


def sgrld_step(params, grad, blocks, h, seed):
    """One preconditioned Langevin update; ``seed`` may be a Generator."""
    if h < 0:
        raise ValueError("stepsize must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    u = unconstrain(params)
    masks = coord_mask(params)
    nat = apply(blocks, grad)
    z = BlockVec({k: rng.standard_normal(u[k].shape) for k in u})
    xi = noise_factor(blocks, z)
    root2h = np.sqrt(2.0 * h)
    for k in u:
        delta = h * (nat[k] + blocks.gamma[k]) + root2h * xi[k]
        if not np.all(np.isfinite(delta[masks[k]])):
            raise ValueError(f"non-finite update in block {k!r}")
        u[k] = u[k] + delta * masks[k]
    return constrain(params.family, u)


def sgld_step(params, grad, h, seed):
    """Unpreconditioned update; the identity-metric special case."""
    return sgrld_step(params, grad, identity_blocks(params), h, seed)


def _slds_gradient(params, obs, sub, prior, p0, config, rng):
    from ssm_sgmcmc.slds import slds_noisy_gradient

    est = config.estimator or "xz"
    if est == "buffered":
        est = "xz"
    return slds_noisy_gradient(params, obs, sub, prior=prior, p0=p0,
                               estimator=est, n_samples=config.n_samples,
                               burn_in=config.burn_in, seed=rng)


def _step_gradient(params, obs, config, prior, p0, rng, grad_fn, B):
    """One gradient estimate; returns (grad, B actually used)."""
    T = len(obs)
    if grad_fn is not None:
        return grad_fn(params, obs, prior, p0, rng), B
    if config.kind in ("ld", "rld"):
        return full_gradient(params, obs, prior=prior, p0=p0), T
    sub = sample_subsequence(T, config.S, B, config.scheme, rng)
    if params.family == "slds":
        return _slds_gradient(params, obs, sub, prior, p0, config, rng), B
    if config.estimator not in (None, "buffered"):
        raise ValueError(
            f"estimator {config.estimator!r} is only defined for slds")
    return buffered_gradient(params, obs, sub, prior=prior, p0=p0), B


def run_chain(obs, config, init, prior=None, grad_fn=None, record_wall=False,
              wall_limit=None):
    """Drive one chain; returns the Trace (partial if a step fails).

    ``grad_fn(params, obs, prior, p0, rng)`` overrides the built-in
    estimators when supplied.  A non-finite step is retried once at half
    the stepsize with fresh noise; a second failure stops the chain with
    the error recorded on the trace.  ``wall_limit`` (seconds) stops the
    chain early without recording an error.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    rng = np.random.default_rng(config.seed)
    riemann = config.kind in ("sgrld", "rld")
    params = init
    trace = Trace(samples=[init], wall_seconds=[0.0], grad_norms=[],
                  buffer_sizes=[], config=config)
    t0 = time.perf_counter()
    B = config.B
    for s in range(config.n_steps):
        if wall_limit is not None and time.perf_counter() - t0 > wall_limit:
            break
        h = config.stepsize(s)
        try:
            if config.adapt_every > 0 and s % config.adapt_every == 0:
                from ssm_sgmcmc.buffer import adaptive_buffer

                B = adaptive_buffer(params, obs, config.S,
                                    config.adapt_epsilon,
                                    B_star=config.adapt_B_star,
                                    N_S=config.adapt_n_sub, seed=rng)[0]
            p0 = default_p0(params)
            g, b_used = _step_gradient(params, obs, config, prior, p0, rng,
                                       grad_fn, B)
            blocks = precondition(params, config.nu_phi) if riemann \
                else identity_blocks(params)
            try:
                params = sgrld_step(params, g, blocks, h, rng)
            except ValueError:
                params = sgrld_step(params, g, blocks, h / 2.0, rng)
        except (ValueError, np.linalg.LinAlgError) as e:
            trace.error = f"step {s}: {e}"
            break
        trace.grad_norms.append(float(g.norm()))
        trace.buffer_sizes.append(b_used)
        if (s + 1) % config.thin == 0:
            trace.samples.append(params)
            trace.wall_seconds.append(
                time.perf_counter() - t0 if record_wall else 0.0)
    return trace
