"""Benchmark the compiled flow kernels against the numpy fallback.

Run:  python benchmarks/bench_flow.py [--size 128] [--repeats 5]
"""
from __future__ import annotations

import argparse
import importlib
import os
import sys
import time

import numpy as np


def _fresh_flow(force_numpy: bool):
    """(Re)import srvqa.flow with or without the compiled backend."""
    if force_numpy:
        os.environ["SRVQA_NO_EXT"] = "1"
    else:
        os.environ.pop("SRVQA_NO_EXT", None)
    for mod in list(sys.modules):
        if mod.startswith("srvqa"):
            del sys.modules[mod]
    return importlib.import_module("srvqa.flow")


def _pair(size: int, seed: int = 0):
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    base = ndimage.gaussian_filter(rng.random((size + 8, size + 8)), 2.0)
    a = base[4 : 4 + size, 4 : 4 + size]
    b = base[2 : 2 + size, 3 : 3 + size]  # (dy, dx) = (-2, -1)
    return a, b


def bench(size: int, repeats: int) -> None:
    results = {}
    for force_numpy in (False, True):
        flow = _fresh_flow(force_numpy)
        label = flow.BACKEND
        a, b = _pair(size)
        flow.farneback_flow(a, b)  # warm-up
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            f = flow.farneback_flow(a, b)
            times.append(time.perf_counter() - t0)
        results[label] = (min(times), f.vectors.copy())

        t0 = time.perf_counter()
        flow.block_match_flow(a, b, block=8, radius=3)
        results[label + "+bm"] = (time.perf_counter() - t0, None)

    print(f"size {size}x{size}, best of {repeats}:")
    for label, (t, _) in results.items():
        print(f"  {label:14s} {t * 1e3:8.2f} ms")
    labels = [k for k in results if not k.endswith("+bm")]
    if len(labels) == 2:
        va, vb = results[labels[0]][1], results[labels[1]][1]
        print(f"  max |difference| between backends: {np.abs(va - vb).max():.3e}")
        ta, tb = results[labels[0]][0], results[labels[1]][0]
        slow, fast = max(ta, tb), min(ta, tb)
        print(f"  speedup: {slow / fast:.1f}x")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    bench(args.size, args.repeats)
