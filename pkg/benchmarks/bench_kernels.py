"""Time the compiled and pure-Python trial kernels on identical realizations.

Usage: python benchmarks/bench_kernels.py [--trials N] [--seed S]
"""

import argparse
import time

import numpy as np

from cavityobs.disturbances import trial_seed
from cavityobs.harness import Scenario, realize_truth, run_trial
from cavityobs.kernel import available_backends


def bench(backend, truths, scenario, variant):
    start = time.perf_counter()
    tables = [run_trial(None, scenario, variant, backend=backend, truth=t).table for t in truths]
    return time.perf_counter() - start, tables


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    scenario = Scenario()
    truths = [realize_truth(scenario, trial_seed(args.seed, i)) for i in range(args.trials)]
    backends = available_backends()
    print(f"{args.trials} trials x {scenario.n_steps} steps; backends: {', '.join(backends)}")
    for variant in ("proposed", "standard"):
        timings, tables = {}, {}
        for name in backends:
            bench(name, truths[:1], scenario, variant)  # warm-up
            timings[name], tables[name] = bench(name, truths, scenario, variant)
            per = timings[name] / args.trials * 1e3
            print(f"  {variant:8s} {name:7s} {timings[name]:8.3f} s total  {per:8.3f} ms/trial")
        if len(backends) == 2:
            diff = max(float(np.nanmax(np.abs(a - b))) for a, b in zip(tables["python"], tables["cython"]))
            print(f"  {variant:8s} speedup {timings['python'] / timings['cython']:.1f}x, "
                  f"max |python - cython| {diff:.2e}")


if __name__ == "__main__":
    main()
