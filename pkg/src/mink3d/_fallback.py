"""Pure numpy implementations of the hot kernels.

Mirrors the signatures of the compiled ``_core`` extension and is used when
the extension is unavailable or ``MINK3D_BACKEND=python`` is set.
"""
import itertools

import numpy as np


def owned_cells(white):
    """Faces, edges and vertices owned by each white voxel.

    A cell shared by several white voxels belongs to the lexicographically
    smallest incident one. Returns an int32 array of shape (nx, ny, nz, 3).
    """
    white = np.asarray(white, dtype=bool)
    nx, ny, nz = white.shape
    dims = (nx, ny, nz)
    padded = np.pad(white, 1)
    counts = np.zeros((nx + 2, ny + 2, nz + 2, 3), dtype=np.int32)

    # A cell is located by the axes along which it sits on a lattice plane
    # ("free" axes, offsets 0/1 into the padded grid); on the remaining axes
    # it spans the voxel and the offset is fixed at 1.
    for slot, n_free in ((0, 1), (1, 2), (2, 3)):
        for free in itertools.combinations(range(3), n_free):
            extent = [dims[a] + 1 if a in free else dims[a] for a in range(3)]
            assigned = np.zeros(extent, dtype=bool)
            for bits in itertools.product((0, 1), repeat=n_free):
                start = [1, 1, 1]
                for axis, bit in zip(free, bits):
                    start[axis] = bit
                window = tuple(slice(s, s + e) for s, e in zip(start, extent))
                claim = padded[window] & ~assigned
                counts[window + (slot,)] += claim
                assigned |= claim
    return counts[1:-1, 1:-1, 1:-1]


def window_sums(contrib, points, weights):
    """Kernel-weighted sums of ``contrib`` around each point.

    contrib: (nx, ny, nz, c) float64; points: (N, 3) int64;
    weights: (K, m, n, p) float64 with odd extents.
    Returns (N, K, c): out[q, k] = sum_o weights[k, o + r] * contrib[points[q] + o]
    with windows clipped at the volume boundary.
    """
    contrib = np.asarray(contrib, dtype=np.float64)
    points = np.asarray(points, dtype=np.int64).reshape(-1, 3)
    weights = np.asarray(weights, dtype=np.float64)
    n_kernels = weights.shape[0]
    radius = [(s - 1) // 2 for s in weights.shape[1:]]
    out = np.zeros((len(points), n_kernels, contrib.shape[3]))
    if len(points) == 0:
        return out
    pad = [(r, r) for r in radius] + [(0, 0)]
    field = np.pad(contrib, pad)
    pi, pj, pk = points[:, 0], points[:, 1], points[:, 2]
    for a, b, c in np.ndindex(*weights.shape[1:]):
        gathered = field[pi + a, pj + b, pk + c]
        w = weights[:, a, b, c]
        out += w[None, :, None] * gathered[:, None, :]
    return out
