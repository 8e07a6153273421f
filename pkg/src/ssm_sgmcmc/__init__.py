"""Stochastic-gradient MCMC for discrete-time state space models.

Buffered-subsequence gradient estimators with exact message passing
(Gaussian HMM, autoregressive HMM, linear-Gaussian SSM) or blocked Gibbs
sampling (switching linear dynamical system), Fisher-information
preconditioning, and SGLD/SGRLD chain drivers.
"""

from ssm_sgmcmc.params import (
    HMMParams,
    ARHMMParams,
    LGSSMParams,
    SLDSParams,
    PriorSpec,
    BlockVec,
    constrain,
    unconstrain,
    log_prior,
    log_prior_grad,
)
from ssm_sgmcmc.models import (
    simulate,
    make_synthetic_star,
    init_params,
    default_p0,
    stationary_dist,
    steady_state_cov,
)
from ssm_sgmcmc.kernels import KERNEL
from ssm_sgmcmc.estimators import (
    sample_subsequence,
    buffered_gradient,
    unbiased_gradient,
    full_gradient,
)
from ssm_sgmcmc.precond import precondition
from ssm_sgmcmc.samplers import (
    SamplerConfig,
    Trace,
    run_chain,
    sgld_step,
    sgrld_step,
)
from ssm_sgmcmc.slds import slds_noisy_gradient
from ssm_sgmcmc.buffer import (
    dobrushin_bound,
    lgssm_lipschitz,
    adaptive_buffer,
    extrapolate_buffer,
    empirical_grad_error_curve,
)
from ssm_sgmcmc.evaluation import (
    heldout_loglik,
    predictive_k_step,
    constrained_blocks,
    param_mse_aligned,
    aligned_block_mse,
    ksd_imq,
    nmi,
    latent_rmse,
    slds_em_lower_bound,
)

__all__ = [
    "HMMParams",
    "ARHMMParams",
    "LGSSMParams",
    "SLDSParams",
    "PriorSpec",
    "BlockVec",
    "constrain",
    "unconstrain",
    "log_prior",
    "log_prior_grad",
    "simulate",
    "make_synthetic_star",
    "init_params",
    "default_p0",
    "stationary_dist",
    "steady_state_cov",
    "KERNEL",
    "sample_subsequence",
    "buffered_gradient",
    "unbiased_gradient",
    "full_gradient",
    "precondition",
    "SamplerConfig",
    "Trace",
    "run_chain",
    "sgld_step",
    "sgrld_step",
    "slds_noisy_gradient",
    "dobrushin_bound",
    "lgssm_lipschitz",
    "adaptive_buffer",
    "extrapolate_buffer",
    "empirical_grad_error_curve",
    "heldout_loglik",
    "predictive_k_step",
    "constrained_blocks",
    "param_mse_aligned",
    "aligned_block_mse",
    "ksd_imq",
    "nmi",
    "latent_rmse",
    "slds_em_lower_bound",
]

__version__ = "0.1.0"
