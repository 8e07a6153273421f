"""Kernel selection: compiled forward-backward core with a numpy fallback.

The compiled extension is optional; installation without a C toolchain (or a
failed build) silently degrades to the pure-numpy implementation, which is
numerically identical.  ``KERNEL`` records which one is active.
"""

try:
    from ssm_sgmcmc._fb import fb_pass

    KERNEL = "compiled"
except ImportError:  # pragma: no cover - depends on build environment
    from ssm_sgmcmc._fb_np import fb_pass

    KERNEL = "numpy"

__all__ = ["fb_pass", "KERNEL"]
