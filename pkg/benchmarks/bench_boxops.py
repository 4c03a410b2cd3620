"""Benchmark the compiled box kernels against the pure-Python twins.

Runs the scalar ops over random box pairs and the batch IoU ops over
random box sets, timing each backend that is importable, and prints a
table with the speedup. Usage: python benchmarks/bench_boxops.py
"""

from __future__ import annotations

import argparse
import importlib
import time

import numpy as np


def _load_backends():
    backends = {}
    py = importlib.import_module("relscore._kernels._boxops_py")
    backends[py.BACKEND] = py
    try:
        cy = importlib.import_module("relscore._kernels._boxops_cy")
        backends[cy.BACKEND] = cy
    except ImportError:
        pass
    return backends


def _random_boxes(rng: np.random.Generator, n: int) -> np.ndarray:
    xy = rng.uniform(0, 900, size=(n, 2))
    wh = rng.uniform(1, 100, size=(n, 2))
    return np.ascontiguousarray(np.hstack([xy, wh]))


def bench_scalar(ops, boxes: np.ndarray, repeats: int) -> float:
    rows = boxes.tolist()
    start = time.perf_counter()
    acc = 0.0
    for _ in range(repeats):
        for i in range(0, len(rows) - 1, 2):
            a = rows[i]
            b = rows[i + 1]
            acc += ops.iou_xywh(a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3])
            acc += ops.separation_xywh(
                a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3], 1000.0, 1000.0
            )
    elapsed = time.perf_counter() - start
    assert acc >= 0.0
    return elapsed


def bench_batch(ops, boxes: np.ndarray, repeats: int) -> float:
    start = time.perf_counter()
    for _ in range(repeats):
        ops.pairwise_iou(boxes)
    return time.perf_counter() - start


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=20_000, help="box pairs for scalar ops")
    parser.add_argument("--batch", type=int, default=400, help="boxes in the pairwise matrix")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=20240601)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    scalar_boxes = _random_boxes(rng, args.pairs * 2)
    batch_boxes = _random_boxes(rng, args.batch)

    backends = _load_backends()
    if "cython" not in backends:
        print("note: compiled kernels unavailable, timing pure python only")

    results: dict[str, tuple[float, float]] = {}
    for name, ops in sorted(backends.items()):
        scalar_s = bench_scalar(ops, scalar_boxes, args.repeats)
        batch_s = bench_batch(ops, batch_boxes, args.repeats)
        results[name] = (scalar_s, batch_s)

    header = f"{'backend':<10} {'scalar ops [s]':>15} {'pairwise_iou [s]':>18}"
    print(header)
    print("-" * len(header))
    for name, (scalar_s, batch_s) in results.items():
        print(f"{name:<10} {scalar_s:>15.4f} {batch_s:>18.4f}")
    if {"python", "cython"} <= results.keys():
        py_scalar, py_batch = results["python"]
        cy_scalar, cy_batch = results["cython"]
        print(
            f"\nspeedup (python/cython): scalar {py_scalar / cy_scalar:.1f}x, "
            f"batch {py_batch / cy_batch:.1f}x"
        )


if __name__ == "__main__":
    main()
