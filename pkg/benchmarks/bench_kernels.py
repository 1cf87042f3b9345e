#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure NumPy fallback.

Times the two hot paths of the package: complex QR eigenvalues of the
stability matrices (8x8 and 10x10) and RK4 integration of the plaquette
flow. Run after building the extension:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from ptplaq.kernels import pyref

try:
    from ptplaq import _cykern
except ImportError:
    _cykern = None

from ptplaq import stability, stationary
from ptplaq.model import PlaquetteConfig, PlaquetteKind, build_linear_hamiltonian


def _timeit(fn, min_time=0.4):
    fn()  # warm up
    n = 0
    t0 = time.perf_counter()
    while True:
        fn()
        n += 1
        dt = time.perf_counter() - t0
        if dt > min_time:
            return dt / n


def bench_eig(backend, mats, sweeps):
    def run():
        for m in mats:
            backend.eigvals(m, sweeps)
    return _timeit(run) / len(mats)


def bench_rk4(backend, h, u0, steps):
    def run():
        backend.rk4_evolve(h, u0, 1e-3, steps, 100, 1e6)
    return _timeit(run)


def main():
    rng = np.random.default_rng(0)

    cfg_a = PlaquetteConfig(PlaquetteKind.A, 1.0, 0.9)
    cfg_d = PlaquetteConfig(PlaquetteKind.D, 1.0, 0.1)
    b_mats = []
    for cfg, e in ((cfg_a, 2.0), (cfg_d, 15.0)):
        for s in stationary.analytic_branches(cfg, e):
            if np.abs(s.u).max() > 1e-6:
                b_mats.append(stability.linearization_matrix(cfg, e, s.u))
    rand_mats = [rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
                 for _ in range(16)]

    h = build_linear_hamiltonian(cfg_a)
    u0 = np.array([0.6 + 0.1j, -0.4 + 0.3j, 0.2 - 0.5j, 0.1 + 0.2j])
    steps = 20_000

    rows = []
    for name, mats in (("eig stability 8x8/10x10", b_mats),
                       ("eig random 8x8", rand_mats)):
        t_py = bench_eig(pyref, mats, 100 * 10 * 10)
        t_cy = bench_eig(_cykern, mats, 100 * 10 * 10) if _cykern else None
        rows.append((name, t_py, t_cy))
    t_py = bench_rk4(pyref, h, u0, steps)
    t_cy = bench_rk4(_cykern, h, u0, steps) if _cykern else None
    rows.append((f"rk4 {steps} steps (4 sites)", t_py, t_cy))

    print(f"{'kernel':<28} {'pure':>12} {'compiled':>12} {'speedup':>9}")
    for name, t_py, t_cy in rows:
        if t_cy is None:
            print(f"{name:<28} {t_py * 1e6:>10.1f}us {'n/a':>12} {'n/a':>9}")
        else:
            print(f"{name:<28} {t_py * 1e6:>10.1f}us {t_cy * 1e6:>10.1f}us "
                  f"{t_py / t_cy:>8.1f}x")
    if _cykern is None:
        print("\ncompiled extension not built; showing the pure backend only")


if __name__ == "__main__":
    main()
