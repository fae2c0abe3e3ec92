"""Per-voxel kernel-weighted Minkowski functionals (isotropic kernels).

For each white voxel ``v`` the row is the sum, over white voxels ``u`` in the
kernel window centred on ``v``, of ``weight(u - v) * contribution(u)``,
where contributions come from :func:`minkowski.voxel_contributions`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .minkowski import COMPONENTS, voxel_contributions
from .volume import BinaryVolume

KERNEL_SIZES = tuple(range(5, 20, 2))
KERNEL_KINDS = ("box", "isotropic_gaussian", "oriented_gaussian")


@dataclass(frozen=True, eq=False)
class Kernel3D:
    weights: np.ndarray
    kind: str = "box"
    sigma: tuple[float, float, float] | None = None
    orientation: tuple[float, float, float] | None = None

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim != 3 or any(s < 1 or s % 2 == 0 for s in weights.shape):
            raise ValueError(f"kernel extents must be odd and positive, got {weights.shape}")
        if not np.all(np.isfinite(weights)):
            raise ValueError("kernel weights must be finite")
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.weights.shape)

    def scaled(self, factor: float) -> "Kernel3D":
        return Kernel3D(self.weights * factor, self.kind, self.sigma, self.orientation)


def _check_size(size):
    if int(size) != size or size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    return int(size)


def kernel_offsets(size: int) -> np.ndarray:
    """(size, size, size, 3) array of tap offsets from the centre."""
    r = (size - 1) // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    return np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)


def make_box_kernel(size: int) -> Kernel3D:
    size = _check_size(size)
    return Kernel3D(np.ones((size, size, size)), kind="box")


def make_isotropic_gaussian(size: int, sigma: float) -> Kernel3D:
    """Gaussian taps exp(-r^2 / (2 sigma^2)) with the centre tap equal to 1."""
    size = _check_size(size)
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    r2 = (kernel_offsets(size) ** 2).sum(axis=-1)
    return Kernel3D(
        np.exp(-r2 / (2.0 * sigma**2)),
        kind="isotropic_gaussian",
        sigma=(float(sigma),) * 3,
    )


@dataclass(frozen=True, eq=False)
class LocalMFTable:
    """One row per white voxel, in x-fastest scan order."""

    indices: np.ndarray
    values: np.ndarray
    columns: tuple[str, ...] = field(default=COMPONENTS)

    def __len__(self):
        return len(self.indices)

    def column(self, component: str) -> np.ndarray:
        return self.values[:, self.columns.index(component)]


def _weights_stack(kernels) -> np.ndarray:
    shapes = {k.dims for k in kernels}
    if len(shapes) != 1:
        raise ValueError(f"kernels must share one shape, got {sorted(shapes)}")
    return np.stack([k.weights for k in kernels])


def weighted_responses(vol: BinaryVolume, kernels, backend=None):
    """Rows for several same-shaped kernels at once.

    Returns ``(indices, values)`` with ``values`` of shape (N_WP, K, 4).
    """
    indices = vol.white_indices()
    weights = _weights_stack(kernels)
    if len(indices) == 0:
        return indices, np.zeros((0, len(kernels), len(COMPONENTS)))
    contrib = voxel_contributions(vol, backend=backend).astype(np.float64)
    return indices, _backend.window_sums(contrib, indices, weights, backend=backend)


def local_mf(vol: BinaryVolume, kernel: Kernel3D, backend=None) -> LocalMFTable:
    indices, values = weighted_responses(vol, [kernel], backend=backend)
    return LocalMFTable(indices, values[:, 0, :])


def write_table(table: LocalMFTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "k", *table.columns])
        for idx, row in zip(table.indices, table.values):
            writer.writerow([*map(int, idx), *map(repr, map(float, row))])


def read_table(path) -> LocalMFTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["i", "j", "k"]:
            raise ValueError(f"{path}: not a local MF table")
        rows = list(reader)
    indices = np.array([[int(v) for v in r[:3]] for r in rows], dtype=np.int64).reshape(-1, 3)
    values = np.array([[float(v) for v in r[3:]] for r in rows]).reshape(-1, len(header) - 3)
    return LocalMFTable(indices, values, tuple(header[3:]))

