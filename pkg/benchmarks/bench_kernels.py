"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from spsgate import _pykernels, kernels


def _streams(n, seed=0):
    rng = np.random.default_rng(seed)
    span = n * 3125  # about one tag per 12.5 ns on each channel, in 4 ps ticks
    a = np.sort(rng.integers(0, span, n))
    b = np.sort(rng.integers(0, span, n))
    return a, b


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    impls = {"python": _pykernels}
    if kernels.BACKEND == "cython":
        from spsgate import _ckernels
        impls["cython"] = _ckernels
    else:
        print("compiled extension not built; timing the fallback only")

    a, b = _streams(args.n)
    window = 81_250 // 4 * 4  # 6.5 periods at 80 MHz, in ticks
    cases = {
        "correlate_counts": lambda m: m.correlate_counts(a, b, window, 4),
        "deadtime_mask": lambda m: m.deadtime_mask(np.sort(np.r_[a, b]), 5_000),
    }
    ref = {name: np.asarray(fn(_pykernels)) for name, fn in cases.items()}

    print(f"{'kernel':18s} {'backend':8s} {'best s':>9s} {'speedup':>8s}")
    for name, fn in cases.items():
        base = None
        for label, mod in impls.items():
            assert np.array_equal(np.asarray(fn(mod)), ref[name]), f"{label} disagrees on {name}"
            best = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
            base = base or best
            print(f"{name:18s} {label:8s} {best:9.4f} {base / best:8.1f}x")


if __name__ == "__main__":
    main()
