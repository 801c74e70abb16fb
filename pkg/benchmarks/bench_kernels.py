"""Benchmark the numba kernels against the pure-numpy fallback.

Times one full training step (forward + head loss/grads + backward) at the
production problem size for both backends and prints a small table.

    python benchmarks/bench_kernels.py [--batch 32] [--repeats 50]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cqsim import kernels


def make_problem(rng, batch, gallery=58, embed=64, hidden=256):
    D = embed + gallery * kernels.HEAD_WIDTH
    return {
        "X": rng.normal(size=(batch, D)),
        "W1": rng.normal(size=(hidden, D)) * 0.05,
        "b1": rng.normal(size=hidden) * 0.05,
        "W2": rng.normal(size=(hidden, hidden)) * 0.05,
        "b2": rng.normal(size=hidden) * 0.05,
        "WH": rng.normal(size=(gallery * kernels.HEAD_WIDTH, hidden)) * 0.05,
        "bH": rng.normal(size=gallery * kernels.HEAD_WIDTH) * 0.05,
        "sel": (rng.random((batch, gallery)) < 0.05).astype(np.float64),
        "size_t": rng.integers(0, 3, size=(batch, gallery)),
        "flip_t": rng.integers(0, 2, size=(batch, gallery)),
        "pos_t": rng.random((batch, gallery, 2)),
        "asym": (rng.random(gallery) < 0.8).astype(np.float64),
    }


def step(table, p, batch, gallery):
    H1, H2, O = table["dense_forward"](p["X"], p["W1"], p["b1"], p["W2"], p["b2"],
                                       p["WH"], p["bH"])
    O3 = np.ascontiguousarray(O.reshape(batch, gallery, kernels.HEAD_WIDTH))
    loss, dO = table["head_loss_grads"](O3, p["sel"], p["size_t"], p["flip_t"],
                                        p["pos_t"], p["asym"])
    dO2 = np.ascontiguousarray(dO.reshape(batch, -1))
    table["dense_backward"](dO2, p["X"], H1, H2, p["W1"], p["W2"], p["WH"])
    return loss


def bench(name, p, batch, gallery, repeats):
    table = kernels.get_backend(name)
    step(table, p, batch, gallery)  # warm up (jit compile)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        step(table, p, batch, gallery)
        times.append(time.perf_counter() - t0)
    return np.median(times), min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--gallery", type=int, default=58)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    p = make_problem(rng, args.batch, args.gallery)
    results = {}
    for name in ("numpy", "numba"):
        try:
            results[name] = bench(name, p, args.batch, args.gallery, args.repeats)
        except ImportError:
            print(f"{name:>6}: unavailable")
    print(f"training step, batch={args.batch}, gallery={args.gallery}, "
          f"repeats={args.repeats}")
    print(f"{'backend':>8} {'median':>12} {'best':>12}")
    for name, (median, best) in results.items():
        print(f"{name:>8} {median * 1e3:>10.3f}ms {best * 1e3:>10.3f}ms")
    if len(results) == 2:
        ratio = results["numpy"][0] / results["numba"][0]
        print(f"numba speedup over numpy: {ratio:.2f}x (values < 1 mean numpy wins)")


if __name__ == "__main__":
    main()
