"""Time the numba loop kernels against the vectorized numpy kernels.

Usage: python3 benchmarks/bench_kernels.py [--studies 12,100,1000] [--repeat 5]

Both backends are imported directly, so the CTRLRATE_JIT switch does not
matter here. Compilation is done (or loaded from cache) before timing.
"""
import argparse
import timeit

import numpy as np

from ctrlrate.data import hoes_dataset
from ctrlrate.estimation import starting_values
from ctrlrate.kernels import _loops, _vector
from ctrlrate.simulation import replicate_rng, scenario, simulate_dataset

NM_ARGS = (1000, 1.5e-8, 1.0, 0.5, 2.0, 0)


def workloads(data):
    start = starting_values(data)
    theta = start.copy()
    theta[3] = max(theta[3], 0.05)
    other = theta + np.array([0.1, 0.2, -0.1, 0.01, 0.05])
    y, g = data.y, data.g
    return {
        "loglik": lambda k: k.loglik(theta, y, g),
        "score": lambda k: k.score(theta, y, g),
        "expected_info": lambda k: k.expected_info(theta, y, g),
        "s_and_q": lambda k: k.s_and_q(theta, other, y, g),
        "fit_free": lambda k: k.fit_free(start, y, g, *NM_ARGS),
    }


def best_time(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--studies", default="12,100,1000")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    print(f"{'n':>6}  {'kernel':<14} {'numba [us]':>12} {'numpy [us]':>12} {'speedup':>8}")
    for n in (int(v) for v in args.studies.split(",")):
        if n == 12:
            data = hoes_dataset()
        else:
            data, _ = simulate_dataset(scenario(1, 0.5), n, replicate_rng(0, 0, n))
        for name, call in workloads(data).items():
            call(_loops)  # compile or load from cache
            t_jit = best_time(lambda: call(_loops), args.repeat)
            t_np = best_time(lambda: call(_vector), args.repeat)
            print(f"{n:>6}  {name:<14} {t_jit * 1e6:>12.1f} {t_np * 1e6:>12.1f} "
                  f"{t_np / t_jit:>8.1f}")


if __name__ == "__main__":
    main()
