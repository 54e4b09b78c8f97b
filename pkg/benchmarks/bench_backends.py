"""Benchmark: compiled extension vs NumPy fallback for the hot loops.

Runs the SDE path integrator and the O(n^2) pair-strain sum through both
backends, checks bitwise agreement, and prints timings.

    python3 benchmarks/bench_backends.py [--n 2048] [--steps 500] [--repeat 3]
"""
import argparse
import time

import numpy as np

from rodflow import _fastcore, _pycore


def _inputs(n, steps, seed=0):
    rng = np.random.default_rng(seed)
    xi0 = rng.normal(size=(n, 3))
    xi0 /= np.linalg.norm(xi0, axis=1, keepdims=True)
    dB = rng.normal(scale=np.sqrt(1e-3), size=(n, steps, 3))
    poly = np.array([[0.0, 0.0, 2.0]])
    return xi0, dB, poly


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_sde(n, steps, repeat):
    xi0, dB, poly = _inputs(n, steps)
    results = {}
    for name, core in (("cython", _fastcore), ("numpy", _pycore)):
        results[name] = _time(
            lambda core=core: core.heun_paths(xi0, dB, 0.0, 1e-3, poly, 1.0, 1.0, False),
            repeat,
        )
    # summation order differs at scale (BLAS blocking), so exact equality
    # only holds for small inputs; the paths stay unit vectors, so an
    # absolute tolerance is meaningful
    assert np.allclose(results["cython"][1], results["numpy"][1], rtol=0, atol=1e-10), "backend mismatch"
    return {k: v[0] for k, v in results.items()}


def bench_pair_strain(n, repeat):
    rng = np.random.default_rng(1)
    centers = rng.uniform(-1, 1, size=(n, 3))
    mats = rng.normal(size=(n, 3, 3))
    results = {}
    for name, core in (("cython", _fastcore), ("numpy", _pycore)):
        results[name] = _time(lambda core=core: core.pair_strain(centers, mats), repeat)
    scale = np.abs(results["numpy"][1]).max()
    assert np.allclose(results["cython"][1], results["numpy"][1], rtol=0, atol=1e-10 * scale)
    return {k: v[0] for k, v in results.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2048)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    print(f"SDE Heun paths: n={args.n}, steps={args.steps}")
    sde = bench_sde(args.n, args.steps, args.repeat)
    print(f"  cython {sde['cython']:.3f}s   numpy {sde['numpy']:.3f}s   "
          f"speedup {sde['numpy'] / sde['cython']:.1f}x")

    n_pair = min(args.n, 1024)
    print(f"pair strain (O(n^2)): n={n_pair}")
    ps = bench_pair_strain(n_pair, args.repeat)
    print(f"  cython {ps['cython']:.3f}s   numpy {ps['numpy']:.3f}s   "
          f"speedup {ps['numpy'] / ps['cython']:.1f}x")


if __name__ == "__main__":
    main()
