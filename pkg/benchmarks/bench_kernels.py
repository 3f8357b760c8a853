"""Compare the compiled Philox kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--paths N] [--streams K] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from relperf import _kernels_py, rng

try:
    from relperf import _kernels
except ImportError:
    _kernels = None


def best_time(fill, k0, k1, paths, out, threads: int, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fill(k0, k1, paths, 0, out, threads)
        times.append(time.perf_counter() - start)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=1_000_000)
    parser.add_argument("--streams", type=int, default=2)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--threads", type=int, default=rng.thread_count())
    args = parser.parse_args()

    k0, k1 = rng.stream_keys(12345, rng.Role.IDIOSYNCRATIC, np.arange(args.streams))
    paths = np.arange(args.paths, dtype=np.uint64)
    draws = args.paths * args.streams
    print(f"{draws:,} draws ({args.paths:,} paths x {args.streams} streams), best of {args.repeat}, {args.threads} thread(s)")

    backends = [("numpy", _kernels_py)]
    if _kernels is not None:
        backends.insert(0, ("cython", _kernels))
    else:
        print("compiled kernel not built; timing the fallback only")

    results = {}
    for kind in ("normals", "uniforms"):
        for name, mod in backends:
            out = np.empty((args.paths, args.streams))
            t = best_time(getattr(mod, f"fill_{kind}"), k0, k1, paths, out, args.threads, args.repeat)
            results[(kind, name)] = (t, out)
            print(f"  {kind:<9} {name:<7} {t:8.3f} s  {draws / t / 1e6:8.1f} M/s")
        if len(backends) == 2:
            (tc, oc), (tp, op) = results[(kind, "cython")], results[(kind, "numpy")]
            diff = float(np.max(np.abs(oc - op)))
            print(f"  {kind:<9} speedup {tp / tc:6.1f}x, max |cython - numpy| = {diff:.1e}")


if __name__ == "__main__":
    main()
