"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--n 20000]

Reports mean microseconds per call for the sector closest-point query and
for a 4x16 network forward pass, plus the end-to-end ``infer`` call with
each backend.
"""
import argparse
import time

import numpy as np

from reachpf import _kernels_py, nn
from reachpf.dynamics import ObstacleState

try:
    from reachpf import _kernels as compiled
except ImportError:
    compiled = None


def per_call(fn, args_list):
    tic = time.perf_counter()
    for args in args_list:
        fn(*args)
    return (time.perf_counter() - tic) / len(args_list) * 1e6


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    sector_args = [(*map(float, rng.normal(0, 50, 2)), 0.0, 0.0, float(rng.uniform(-3, 3)),
                    0.01, float(r), float(r) + 60.0)
                   for r in rng.uniform(0, 3000, args.n)]
    mlp = nn.Mlp.initialize([5, 16, 16, 16, 16, 2], rng)
    sizes, flat = mlp.packed()
    mlp_args = [(list(map(float, z)), sizes, flat) for z in rng.uniform(-1, 1, (args.n, 5))]

    backends = [("python", _kernels_py)]
    if compiled is not None:
        backends.insert(0, ("cython", compiled))
    else:
        print("compiled extension not built; timing the fallback only")

    rows = []
    for name, mod in backends:
        rows.append((name, per_call(mod.sector_closest, sector_args),
                     per_call(mod.mlp_forward, mlp_args)))

    # end-to-end inference with each backend swapped in
    obs = ObstacleState([0.0, 0.0], 0.0, 5.0)
    mlp.horizon = 600.0
    mlp.input_lo = np.array([-400, -200, 0, 5, 0], dtype=float)
    mlp.input_hi = np.array([3400, 200, 0, 5, 600], dtype=float)
    mlp.invalidate()
    queries = [(mlp, rng.normal(0, 300, 2), 0.0, obs, float(t))
               for t in rng.uniform(0, 600, args.n)]
    infer_us = {}
    saved = nn.kernels.mlp_forward
    try:
        for name, mod in backends:
            nn.kernels.mlp_forward = mod.mlp_forward
            infer_us[name] = per_call(nn.infer, queries)
    finally:
        nn.kernels.mlp_forward = saved

    print(f"{'backend':<8} {'sector_closest':>16} {'mlp_forward':>13} {'infer':>9}   (us/call)")
    for name, sc, mf in rows:
        print(f"{name:<8} {sc:>16.2f} {mf:>13.2f} {infer_us[name]:>9.2f}")
    if len(rows) == 2:
        print(f"speedup  {rows[1][1] / rows[0][1]:>16.1f}x {rows[1][2] / rows[0][2]:>12.1f}x "
              f"{infer_us['python'] / infer_us['cython']:>8.1f}x")


if __name__ == "__main__":
    main()
