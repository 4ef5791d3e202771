"""Time the stepping loop under both backends and check they agree.

    python benchmarks/bench_backends.py [--N 128] [--M 64] [--substeps 64] [--T 1]
"""
import argparse
import time

import numpy as np

from hsdelay import Grid, SolverOptions, SystemParams, simulate
from hsdelay._accel import _numba_available
from hsdelay.data import Data, history, normalize, sine_modes


def run(backend, p, grid, d, T, opts, nonlinear):
    t0 = time.perf_counter()
    rec = simulate(p, grid, d.u, d.v, d.z0, T, opts, nonlinear=nonlinear, backend=backend)
    return rec, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=128)
    ap.add_argument("--M", type=int, default=64)
    ap.add_argument("--substeps", type=int, default=64)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--nonlinear", action="store_true")
    args = ap.parse_args()

    p = SystemParams.make(0.1, 0.1)
    grid = Grid(args.N)
    opts = SolverOptions(cells=args.M, substeps=args.substeps)
    d = Data(sine_modes(grid, [1, 0.5, 0.25]), sine_modes(grid, [0.5, -0.3]), history("sine", [1, 1]))
    d = normalize(p, grid, d, 0.09375)

    results, secs = {}, {}
    for backend in ("numpy", "numba"):
        if backend == "numba" and not _numba_available():
            print("numba not installed; skipping")
            continue
        if backend == "numba":
            run(backend, p, grid, d, 10 * opts.dt(p.h), opts, args.nonlinear)  # JIT warm-up
        rec, sec = run(backend, p, grid, d, args.T, opts, args.nonlinear)
        results[backend], secs[backend] = rec, sec
        print(f"{backend:6s} {rec.nsteps:8d} steps  {sec:8.3f} s  {1e6 * sec / rec.nsteps:8.2f} us/step")
    if len(results) == 2:
        a, b = results["numpy"], results["numba"]
        diff = np.max(np.abs(a.E - b.E)) / a.E[0]
        print(f"max |E_numpy - E_numba| / E(0) = {diff:.2e}")
        print(f"numba speed-up {secs['numpy'] / secs['numba']:.1f}x")


if __name__ == "__main__":
    main()
