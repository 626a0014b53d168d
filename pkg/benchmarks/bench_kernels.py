"""Compare the compiled and pure-Python kernels on representative inputs.

    python3 benchmarks/bench_kernels.py [--repetitions 5]

Sizes follow the hot paths: graph merging on a 300x400 thumbnail and the
first pooling/activation stage of the 150-input network at batch 64.
"""
import argparse
import sys
import time

import numpy as np

from circuitrec import _kernels
from circuitrec.segmentation import grid_edges


def timed(fn, reps):
    fn()
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    img = rng.integers(0, 256, size=(300, 400, 3)).astype(np.float64)
    a, b, w = grid_edges(img)
    order = np.argsort(w, kind="stable")
    a, b, w = a[order], b[order], w[order]
    n = 300 * 400
    x = rng.standard_normal((64, 148, 148, 32)).astype(np.float32)
    pooled, arg = _kernels.python_kernels.maxpool_forward(x, 4, 4)
    dout = rng.standard_normal(pooled.shape).astype(np.float32)
    flat = rng.standard_normal(x.size // 4).astype(np.float32)
    yield "fh_merge 300x400", lambda k: k.fh_merge(a, b, w, n, 200.0, 50)
    yield "maxpool fwd 64x148x148x32", lambda k: k.maxpool_forward(x, 4, 4)
    yield "maxpool bwd", lambda k: k.maxpool_backward(dout, arg, x.shape, 4, 4)
    yield f"relu fwd {flat.size}", lambda k: k.relu_forward(flat.copy())
    yield "relu bwd", lambda k: k.relu_backward(flat.copy(), flat)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repetitions", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels.compiled_kernels is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28} {'python_s':>10} {'cython_s':>10} {'speedup':>8}")
    for name, call in cases(rng):
        tp = timed(lambda: call(_kernels.python_kernels), args.repetitions)
        tc = timed(lambda: call(_kernels.compiled_kernels), args.repetitions)
        print(f"{name:<28} {tp:>10.4f} {tc:>10.4f} {tp / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
