"""Benchmark the compiled kernels against the pure-Python fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--rays N] [--calls N] [--repeats N]

Times the four hot kernels on identical random inputs and prints the
per-call cost of each implementation plus the compiled speedup.  Run it
after building the extension to check the build actually pays off.
"""

import argparse
import time

import numpy as np

from tisnav.kernels import USING_COMPILED, available_implementations


def make_inputs(rays: int, calls: int, seed: int = 2026):
    rng = np.random.default_rng(seed)
    origins = rng.normal(size=(rays, 3)) * 4.0
    directions = rng.normal(size=(rays, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    points = rng.normal(size=(calls, 3))
    return origins, directions, points


def best_of(repeats: int, fn) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rays", type=int, default=6)
    parser.add_argument("--calls", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    origins, directions, points = make_inputs(args.rays, args.calls)
    start = points[0]
    impls = available_implementations()
    if not USING_COMPILED:
        print("note: compiled extension unavailable, timing fallback only")

    workloads = {
        "ray_objective": lambda impl: [
            impl.ray_objective(p, origins, directions) for p in points
        ],
        "ray_objective_gradient": lambda impl: [
            impl.ray_objective_gradient(p, origins, directions) for p in points
        ],
        "gradient_descent": lambda impl: impl.gradient_descent(
            origins, directions, start, 0.1, 1e-4, 1000
        ),
        "nelder_mead": lambda impl: impl.nelder_mead(
            origins, directions, start, 0.5, 1e-5, 2000
        ),
    }
    per_call = {"ray_objective": args.calls, "ray_objective_gradient": args.calls}

    print(f"rays={args.rays} calls={args.calls} repeats={args.repeats}")
    header = f"{'kernel':<24}" + "".join(f"{name:>14}" for name in impls)
    if len(impls) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, work in workloads.items():
        divisor = per_call.get(name, 1)
        times = {}
        for impl_name, impl in impls.items():
            seconds = best_of(args.repeats, lambda impl=impl: work(impl))
            times[impl_name] = seconds / divisor
        row = f"{name:<24}" + "".join(
            f"{times[n] * 1e6:>12.2f}us" for n in impls
        )
        if len(times) == 2:
            row += f"{times['python'] / times['compiled']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
