"""Compare the compiled kernels with the pure-Python fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Prints one
line per kernel with the best wall time of each backend and the speedup.
"""
import argparse
import time

import numpy as np

from fpcap import _backend, model as M
from fpcap.landscape import communication_height
from fpcap.mc import SimConfig, run_paths


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    ou = M.quadratic(1)
    dw2 = M.double_well_2d(1.0)
    cfg_ou = SimConfig(0.5, 1e-3, 5.0, [1.0], [0.0], 0.1, 256, seed=1)
    cfg_dw = SimConfig(0.1, 1e-3, 2.0, [1.0, 0.0], [-1.0, 0.0], 0.1, 256, seed=1)
    grid = {"box": [(-2, 2), (-2, 2)], "step": 0.02}
    target = {"kind": "ball", "center": [-1.0, 0.0], "radius": 0.1}
    return {
        "em_hitting 1D OU (256 paths)": lambda b: run_paths(cfg_ou, ou, backend=b, workers=1),
        "em_hitting 2D rot (256 paths x 2000 steps)": lambda b: run_paths(cfg_dw, dw2, backend=b, workers=1),
        "minimax_dijkstra 201x201": lambda b: communication_height(dw2, [1.0, 0.0], target, grid, backend=b),
        "rng_normals 10^5 (one stream)": lambda b: _backend.get(b).rng_normals(7, 3, 0, 10 ** 5),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    backends = _backend.available()
    if "cython" not in backends:
        print("compiled kernels not built; only the fallback is timed")
    print(f"{'kernel':45s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup")
    for label, fn in cases().items():
        t = {b: best_time(lambda: fn(b), args.repeat) for b in backends}
        speed = t["python"] / t["cython"] if "cython" in t else np.nan
        print(f"{label:45s} " + " ".join(f"{t[b]:9.4f}s" for b in backends) + f"   {speed:7.1f}x")


if __name__ == "__main__":
    main()
