"""Benchmark the compiled forward-backward kernel against the numpy fallback.

Runs both implementations on identical inputs over a grid of window lengths
and state counts, checks that they agree to machine precision, and prints
per-call timings.  Usage::

    python3 benchmarks/bench_fb.py [--repeats N]
"""

import argparse
import sys
import time

import numpy as np

from ssm_sgmcmc import kernels
from ssm_sgmcmc._fb_np import fb_pass as fb_numpy

try:
    from ssm_sgmcmc._fb import fb_pass as fb_compiled
except ImportError:
    fb_compiled = None


def make_inputs(W, K, rng):
    P = rng.gamma(1.0, 1.0, size=(W, K))
    Pi = rng.dirichlet(np.ones(K), size=K)
    p0 = np.full(K, 1.0 / K)
    return np.ascontiguousarray(P), np.ascontiguousarray(Pi), p0


def best_of(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20,
                    help="timing repeats per case (best-of)")
    args = ap.parse_args(argv)

    print(f"active kernel: {kernels.KERNEL}")
    if fb_compiled is None:
        print("compiled extension not built; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    cases = [(16, 2), (64, 2), (256, 2), (64, 8), (256, 8), (1024, 8),
             (1024, 32), (4096, 32)]
    header = f"{'W':>6} {'K':>4} {'numpy':>12} {'compiled':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for W, K in cases:
        P, Pi, p0 = make_inputs(W, K, rng)
        t_np = best_of(fb_numpy, (P, Pi, p0), args.repeats)
        if fb_compiled is None:
            print(f"{W:>6} {K:>4} {t_np * 1e6:>10.1f}us {'-':>12} {'-':>8}")
            continue
        t_c = best_of(fb_compiled, (P, Pi, p0), args.repeats)
        for a, b in zip(fb_numpy(P, Pi, p0), fb_compiled(P, Pi, p0)):
            err = np.max(np.abs(np.asarray(a) - np.asarray(b)))
            if err > 1e-12:
                print(f"  mismatch at W={W} K={K}: {err:.3e}", file=sys.stderr)
                return 1
        print(f"{W:>6} {K:>4} {t_np * 1e6:>10.1f}us {t_c * 1e6:>10.1f}us "
              f"{t_np / t_c:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
