"""Time each hot kernel under numba and under plain numpy.

    python benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Inputs are sized like one desk-scale training run: 30-token action
sequences, a 32 s video of 512-d frame embeddings, a 1200 Hz gaze stream and
a packed batch of about 4000 graph messages.
"""
import argparse
import csv
import sys
import timeit

import numpy as np

from gazegraph import _kernels as K


def make_inputs(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 40, 30)
    b = rng.integers(0, 40, 28)

    centers = rng.normal(size=(12, 512))
    emb = centers[rng.integers(0, 12, 128)] + 0.4 * rng.normal(size=(128, 512))
    unit = emb / np.linalg.norm(emb, axis=1, keepdims=True)

    n = 38_400
    t = np.arange(n) * (1000.0 / 1200.0)
    jumps = np.repeat(rng.uniform(0, 500, (n // 300, 2)), 300, axis=0)
    xy = jumps + rng.normal(0, 0.05, (n, 2))
    valid = rng.random(n) > 0.01

    seg = np.sort(rng.integers(0, 800, 4300))
    values = rng.normal(size=(4300, 528))
    return {
        "levenshtein": (a, b),
        "assign_nodes": (unit, 0.9),
        "ivt": (t, xy[:, 0], xy[:, 1], valid, 600.0, 30.0),
        "segment_sum": (values, seg, 800),
    }


def bench(backend, name, args, repeat: int) -> float:
    fn = getattr(backend, name)
    fn(*args)  # warm-up, includes JIT compilation
    number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-7)))
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
    return best / number * 1e3


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", help="also write the table to this file")
    args = ap.parse_args(argv)
    if K.JIT is None:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    for name, inputs in make_inputs().items():
        jit_ms = bench(K.JIT, name, inputs, args.repeat)
        np_ms = bench(K.NUMPY, name, inputs, args.repeat)
        rows.append((name, jit_ms, np_ms, np_ms / jit_ms))
    print(f"{'kernel':<14}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, j, n, s in rows:
        print(f"{name:<14}{j:>12.4f}{n:>12.4f}{s:>9.1f}x")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "numba_ms", "numpy_ms", "speedup"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
