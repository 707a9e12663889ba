"""Compare the numba kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py --particles 10000 --chain 2000 --periods 100

Prints seconds per SMC step and per Gibbs draw-period for each backend,
plus the speed-up of numba over numpy when both are available.
"""

from __future__ import annotations

import argparse

from seqbps import _accel
from seqbps.bench import run_bench


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, default=10000)
    ap.add_argument("--chain", type=int, default=2000)
    ap.add_argument("--periods", type=int, default=100)
    args = ap.parse_args(argv)

    results = run_bench(M=args.particles, N=args.chain, L=args.periods)
    print(f"{'backend':<8} {'smc step [s]':>14} {'gibbs/draw/period [s]':>22}")
    for r in results:
        print(f"{r.backend:<8} {r.smc_step:>14.5f} {r.gibbs_sweep_per_period:>22.3e}")
    by = {r.backend: r for r in results}
    if "numba" in by and "numpy" in by:
        print(f"speed-up  smc x{by['numpy'].smc_step / by['numba'].smc_step:.1f}"
              f"  gibbs x{by['numpy'].gibbs_sweep_per_period / by['numba'].gibbs_sweep_per_period:.1f}")
    elif not _accel.NUMBA_AVAILABLE:
        print("numba is unavailable; only the numpy backend was timed")


if __name__ == "__main__":
    main()
