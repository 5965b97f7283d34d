"""Time the numba and numpy kernel implementations side by side.

Usage::

    python benchmarks/bench_kernels.py --n 10000 --g 10 --repeat 200

Kernel timings call both implementations in one process. The end-to-end
timing runs discovery on a simulated dataset in a subprocess per backend,
so the environment flag is what selects the path.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from prebim import kernels
from prebim._backend import ENV_FLAG, HAVE_NUMBA
from prebim.estimators import DEFAULT_TOLERANCE
from prebim.simulator import ScenarioSpec, simulate_scenario

PIPELINE = """
import sys, time
from prebim._backend import BACKEND
from prebim.discovery import find_valid_iv_sets
from prebim.simulator import ScenarioSpec, generate_dataset, draw_scenario_params
import numpy as np
spec = ScenarioSpec(2, 2, {g}, {n}, seed=0)
p, _ = draw_scenario_params(spec, np.random.default_rng(0))
d = generate_dataset(p, spec, np.random.default_rng(1))
find_valid_iv_sets(d)
t = time.perf_counter()
for _ in range({repeat}):
    find_valid_iv_sets(d)
print(BACKEND, (time.perf_counter() - t) / {repeat})
"""


def kernel_cases(n, g):
    spec = ScenarioSpec(max(2, g // 3), max(1, g // 3), g, n, seed=0)
    _, _, s = simulate_scenario(spec)
    z = np.column_stack([s.genotypes, s.x, s.y])
    z = np.ascontiguousarray(z - z.mean(axis=0))
    cov = kernels.IMPLEMENTATIONS["numpy"]["moment_matrix"](z)
    ix, iy = g, g + 1
    idx = np.array([0, 1], dtype=np.int64)
    cand = np.arange(2, g, dtype=np.int64)
    allg = np.arange(g, dtype=np.int64)
    tol = DEFAULT_TOLERANCE
    return {
        "moment_matrix": (z,),
        "tsls": (cov, idx, ix, iy, tol),
        "loo_correlations": (cov, idx, ix, iy, tol, True),
        "pr_correlations": (cov, idx, cand, ix, iy, tol, True),
        "pair_scores": (cov, allg, ix, iy, tol, True),
        "extension_correlations": (cov, idx, cand, ix, iy, tol, True),
    }


def time_call(fn, args, repeat):
    fn(*args)  # warm up (and compile)
    return min(timeit.repeat(lambda: fn(*args), number=repeat, repeat=3)) / repeat


def pipeline_time(backend, n, g, repeat):
    env = dict(os.environ, **{ENV_FLAG: backend})
    out = subprocess.run([sys.executable, "-c", PIPELINE.format(n=n, g=g, repeat=repeat)],
                         env=env, capture_output=True, text=True, check=True)
    name, seconds = out.stdout.split()
    return name, float(seconds)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=10_000, help="sample size")
    parser.add_argument("--g", type=int, default=10, help="number of variants")
    parser.add_argument("--repeat", type=int, default=200, help="calls per timing")
    parser.add_argument("--no-pipeline", action="store_true", help="skip the end-to-end timing")
    args = parser.parse_args(argv)

    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path can be timed")
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    cases = kernel_cases(args.n, args.g)

    print(f"n={args.n} g={args.g}; microseconds per call")
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + f"{'ratio':>10}")
    for name, call_args in cases.items():
        t = [time_call(kernels.IMPLEMENTATIONS[b][name], call_args, args.repeat) for b in backends]
        ratio = f"{t[1] / t[0]:>9.1f}x" if len(t) == 2 else ""
        print(f"{name:<24}" + "".join(f"{v * 1e6:>12.1f}" for v in t) + ratio)

    if not args.no_pipeline:
        reps = max(1, args.repeat // 10)
        print("\nend-to-end discovery, milliseconds per dataset")
        for b in backends:
            name, seconds = pipeline_time(b, args.n, args.g, reps)
            print(f"{name:<24}{seconds * 1e3:>12.2f}")


if __name__ == "__main__":
    main()
