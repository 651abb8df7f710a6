"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from defectspec.kernels import available_backends


def cases():
    rng = np.random.default_rng(0)
    grid = np.linspace(1.0, 2.2, 4001)
    centres = rng.uniform(1.2, 2.1, 200)
    weights = rng.uniform(0, 1, 200)
    fwhm = rng.uniform(0.005, 0.05, 200)
    angles = np.arange(0.0, 180.0, 10.0)
    counts = rng.poisson(500, size=(len(angles), 2000)).astype(float)
    w = 1.0 / np.maximum(counts, 1.0)
    return {
        "fc_matrix S=2 n_max=250": lambda k: k.fc_matrix(2.0, 250),
        "render_lines 200 lines x 4001 pts": lambda k: k.render_lines(grid, centres, weights, fwhm, "gaussian"),
        "cos2_moments 18 angles x 2000 bins": lambda k: k.cos2_moments(angles, counts, w),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    names = sorted(backends)
    print(f"{'kernel':38s}" + "".join(f"{n + ' (ms)':>14s}" for n in names) + f"{'speedup':>10s}")
    for label, fn in cases().items():
        best = {}
        for name in names:
            k = backends[name]
            number = 3
            t = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat)) / number
            best[name] = t * 1e3
        speed = best["python"] / best["cython"] if "cython" in best else float("nan")
        print(f"{label:38s}" + "".join(f"{best[n]:14.3f}" for n in names) + f"{speed:10.1f}x")
    if "cython" not in backends:
        print("compiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
