"""Backend benchmark: compiled stack kernel against the numpy fallback.

Times stack_solve on quadrature-shaped workloads (a few hundred kpar nodes
per call, the panel size the adaptive drivers hand over) and reports the
speedup plus the worst relative deviation between the two backends.  Run
from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N] [--nodes M]

Setting CPFORCE_PURE=1 switches the whole package to the fallback; this
script sidesteps that and imports both backends directly.
"""

import argparse
import time

import numpy as np

from cpforce._kernels import pure

try:
    from cpforce._kernels import _stack as compiled
except ImportError:
    compiled = None


# -- workloads ------------------------------------------------------------

def workloads(nodes):
    """(name, args, want_amplitudes) triples spanning the production calls."""
    c0 = 2.99792458e8
    gold = np.array([1.0, -40.0 + 3.0j], dtype=complex)
    mu2 = np.ones(2, dtype=complex)
    th2 = np.array([0.0, 0.0])
    eps5 = np.array([1.0, 2.1 + 0.4j, -15.0 + 1.5j, 3.5 + 2.0j, 1.8 + 0.1j],
                    dtype=complex)
    mu5 = np.array([1.0, 1.0, 1.2 + 0.05j, 1.0, 1.0], dtype=complex)
    th5 = np.array([0.0, 30e-9, 45e-9, 80e-9, 0.0])
    k0sq_re = complex((1.2e15 / c0) ** 2)
    k0sq_im = complex(-((8.0e14 / c0) ** 2))
    kpar = np.geomspace(1e3, 1e9, nodes)
    return (
        ("half-space, real axis", (gold, mu2, th2, k0sq_re, kpar), False),
        ("half-space, imag axis", (gold, mu2, th2, k0sq_im, kpar), False),
        ("5 layers,   real axis", (eps5, mu5, th5, k0sq_re, kpar), False),
        ("5 layers,   amplitudes", (eps5, mu5, th5, k0sq_re, kpar), True),
    )


# -- timing ---------------------------------------------------------------

def best_time(fn, repeats, calls=20):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(calls):
            fn()
        best = min(best, (time.perf_counter() - t0) / calls)
    return best


def deviation(res_a, res_b):
    """Worst relative mismatch across rs, rp and any amplitudes."""
    worst = 0.0
    for a, b in zip(res_a, res_b):
        if a is None or isinstance(a, tuple):
            continue
        scale = np.abs(b).max() + 1e-300
        worst = max(worst, np.abs(a - b).max() / scale)
    if isinstance(res_a[3], tuple):
        for a, b in zip(res_a[3], res_b[3]):
            scale = np.abs(b).max() + 1e-300
            worst = max(worst, np.abs(a - b).max() / scale)
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--nodes", type=int, default=400)
    args = ap.parse_args()

    if compiled is None:
        print("compiled extension not built; timing the fallback only")
    header = f"{'workload':<24} {'pure':>10} {'compiled':>10} " \
             f"{'speedup':>8} {'max rel dev':>12}"
    print(header)
    print("-" * len(header))
    for name, call_args, amps in workloads(args.nodes):
        t_pure = best_time(lambda: pure.stack_solve(*call_args, amps),
                           args.repeats)
        if compiled is None:
            print(f"{name:<24} {t_pure * 1e6:>8.1f}us {'-':>10} {'-':>8}"
                  f" {'-':>12}")
            continue
        t_comp = best_time(lambda: compiled.stack_solve(*call_args, amps),
                           args.repeats)
        dev = deviation(pure.stack_solve(*call_args, amps),
                        compiled.stack_solve(*call_args, amps))
        print(f"{name:<24} {t_pure * 1e6:>8.1f}us {t_comp * 1e6:>8.1f}us "
              f"{t_pure / t_comp:>7.1f}x {dev:>12.1e}")


if __name__ == "__main__":
    main()
