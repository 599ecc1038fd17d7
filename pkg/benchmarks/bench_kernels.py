"""Time the compiled MLP kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 7] [--min-time 0.2]

Reports the median time per call for forward and backward passes at several
batch sizes, and the speedup of the compiled backend.
"""

import argparse
import timeit

import numpy as np

from stackbo import _backend

# (label, widths): the default surrogate layer shape and a wider variant
SHAPES = [("3x40, d=5", (5, 40, 40, 40)), ("3x100, d=5", (5, 100, 100, 100))]
BATCHES = (1, 21, 200, 2000)


def _time(fn, repeat, min_time):
    timer = timeit.Timer(fn)
    n = max(1, int(min_time / max(timer.timeit(1), 1e-9)))
    return float(np.median(timer.repeat(repeat=repeat, number=n))) / n


def bench(repeat=7, min_time=0.2):
    backends = [("python", _backend.python_kernels)]
    if _backend.compiled_kernels is not None:
        backends.append(("cython", _backend.compiled_kernels))
    rng = np.random.default_rng(0)
    rows = []
    for label, widths in SHAPES:
        n_params = sum(o * i + o for i, o in zip(widths[:-1], widths[1:]))
        theta = rng.standard_normal(n_params) / 4
        for n in BATCHES:
            X = rng.standard_normal((n, widths[0]))
            G = rng.standard_normal((n, widths[-1]))
            times = {}
            for name, k in backends:
                acts = k.mlp_forward(theta, widths, 0, X)
                times[name] = (_time(lambda: k.mlp_forward(theta, widths, 0, X), repeat, min_time),
                               _time(lambda: k.mlp_backward(theta, widths, 0, acts, G), repeat, min_time))
            rows.append((label, n, times))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--min-time", type=float, default=0.2, help="seconds per timing sample")
    args = parser.parse_args(argv)
    if _backend.compiled_kernels is None:
        print("compiled kernels are not built; timing the numpy fallback only")
    print(f"{'network':<12} {'batch':>6} {'pass':<9} {'python (us)':>12} {'cython (us)':>12} {'speedup':>8}")
    for label, n, times in bench(args.repeat, args.min_time):
        for i, kind in enumerate(("forward", "backward")):
            py = times["python"][i] * 1e6
            if "cython" in times:
                cy = times["cython"][i] * 1e6
                print(f"{label:<12} {n:>6} {kind:<9} {py:>12.1f} {cy:>12.1f} {py / cy:>7.2f}x")
            else:
                print(f"{label:<12} {n:>6} {kind:<9} {py:>12.1f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
