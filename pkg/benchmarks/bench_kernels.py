"""Time the compiled and pure-numpy backends on the two hot kernels.

    python benchmarks/bench_kernels.py [--size 48] [--kernel 9] [--repeat 3]
"""
import argparse
import time

import numpy as np

from mink3d import _backend
from mink3d.aniso_mf import direction_bank_default, make_oriented_gaussian
from mink3d.local_mf import _weights_stack
from mink3d.minkowski import voxel_contributions
from mink3d.volume import BinaryVolume


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=48, help="volume edge length")
    ap.add_argument("--kernel", type=int, default=9, help="oriented kernel edge length")
    ap.add_argument("--fraction", type=float, default=0.3, help="white fraction")
    ap.add_argument("--repeat", type=int, default=3, help="timing repeats (best is kept)")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    vol = BinaryVolume(rng.random((args.size,) * 3) < args.fraction)
    contrib = voxel_contributions(vol).astype(np.float64)
    points = vol.white_indices()
    bank = direction_bank_default()
    kernels = [make_oriented_gaussian(args.kernel, args.kernel / 4.0, 4.0, d)
               for d in bank.directions]
    weights = _weights_stack(kernels)

    backends = ["python"] + (["cython"] if _backend._load_compiled() is not None else [])
    print(f"volume {args.size}^3, {len(points)} white voxels, {len(bank.directions)} kernels "
          f"of {args.kernel}^3, threads={_backend.thread_count()}")
    results = {}
    for name in backends:
        t_cells, cells = best_of(lambda: _backend.owned_cells(vol.voxels, backend=name),
                                 args.repeat)
        t_win, sums = best_of(lambda: _backend.window_sums(contrib, points, weights,
                                                            backend=name), args.repeat)
        results[name] = (cells, sums)
        print(f"{name:>7}: owned_cells {t_cells * 1e3:9.2f} ms   "
              f"window_sums {t_win * 1e3:9.2f} ms")
    if len(results) == 2:
        (c0, s0), (c1, s1) = results.values()
        print(f"agreement: cells identical={np.array_equal(c0, c1)}, "
              f"window max |diff|={np.abs(s0 - s1).max():.3g}")


if __name__ == "__main__":
    main()
