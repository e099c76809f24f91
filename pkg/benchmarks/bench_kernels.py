"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel and size with the median time of each backend and
the speedup. Both backends are checked to agree before timing.
"""

import argparse
import statistics
import sys
import timeit

import numpy as np

from focuspolicy import _kernels_py

try:
    from focuspolicy import _kernels
except ImportError:
    _kernels = None


def cases(gen):
    for n, m in ((64, 16), (256, 64), (1024, 64), (4096, 256)):
        pts = np.ascontiguousarray(gen.random((n, 2)))
        yield f"fps n={n} m={m}", "farthest_point_sample", (pts, m, 0)
    for rows, width, segs in ((512, 64, 32), (4096, 128, 256), (20000, 64, 2000)):
        vals = np.ascontiguousarray(gen.standard_normal((rows, width)))
        seg = np.ascontiguousarray(gen.integers(0, segs, rows), dtype=np.int64)
        yield f"segment_sum {rows}x{width}", "segment_sum", (vals, seg, segs)
        yield f"segment_max {rows}x{width}", "segment_max", (vals, seg, segs)


def median_time(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05:
        number *= 2
    return statistics.median(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    gen = np.random.default_rng(0)
    print(f"{'case':28s} {'cython':>11s} {'python':>11s} {'speedup':>8s}")
    for label, name, call in cases(gen):
        fast, slow = getattr(_kernels, name), getattr(_kernels_py, name)
        if not np.array_equal(np.asarray(fast(*call)), np.asarray(slow(*call))):
            print(f"{label}: backends disagree", file=sys.stderr)
            return 2
        tf = median_time(fast, call, args.repeat)
        ts = median_time(slow, call, args.repeat)
        print(f"{label:28s} {tf * 1e6:9.1f}us {ts * 1e6:9.1f}us {ts / tf:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
