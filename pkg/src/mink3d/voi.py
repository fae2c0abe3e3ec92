"""Spherical volume of interest: Gauss-Newton sphere fit, shrink, rasterize."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .volume import BinaryVolume

logger = logging.getLogger(__name__)

DEFAULT_SCALE = 0.75


class FitError(RuntimeError):
    """Degenerate input or a fit that failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SphereVOI:
    center: tuple[float, float, float]
    radius: float
    scale: float = 1.0
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be > 0")
        if not 0 < self.scale <= 1:
            raise ValueError("scale must lie in (0, 1]")

    @property
    def scaled_radius(self) -> float:
        return self.radius * self.scale


def algebraic_sphere(points):
    """Linear least squares on |p|^2 = 2 c.p + (r^2 - |c|^2)."""
    p = np.asarray(points, dtype=np.float64)
    A = np.hstack([2.0 * p, np.ones((len(p), 1))])
    b = (p**2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    center = sol[:3]
    r2 = sol[3] + center @ center
    return center, float(np.sqrt(max(r2, 0.0)))


def _residuals(points, center, radius):
    return np.linalg.norm(points - center, axis=1) - radius


def fit_sphere(points, max_iter=100, step_tol=1e-9) -> SphereVOI:
    """Least-squares sphere through surface points (coordinates in mm).

    Minimizes sum_i (|p_i - c| - r)^2 by Gauss-Newton from the algebraic
    fit, halving any step that would increase the residual.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) < 4:
        raise FitError("need at least 4 points in 3D")
    centred = p - p.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[-1] <= 1e-10 * max(sv[0], 1e-300):
        raise FitError("points are coplanar or degenerate")

    center, radius = algebraic_sphere(p)
    params = np.append(center, radius)
    cost = float(np.sum(_residuals(p, params[:3], params[3]) ** 2))
    for it in range(1, max_iter + 1):
        diff = p - params[:3]
        dist = np.linalg.norm(diff, axis=1)
        if np.any(dist == 0):
            raise FitError("a point coincides with the sphere centre", cost)
        r = dist - params[3]
        J = np.hstack([-diff / dist[:, None], -np.ones((len(p), 1))])
        delta, *_ = np.linalg.lstsq(J, -r, rcond=None)
        t = 1.0
        while True:
            trial = params + t * delta
            trial_cost = float(np.sum(_residuals(p, trial[:3], trial[3]) ** 2))
            if trial_cost <= cost or t < 1e-12:
                break
            t *= 0.5
        if trial_cost > cost:
            trial, trial_cost = params, cost
        step = np.linalg.norm(trial - params)
        params, cost = trial, trial_cost
        if step < step_tol:
            return SphereVOI(tuple(params[:3]), float(params[3]), 1.0, it, cost)
    raise FitError(f"Gauss-Newton did not converge in {max_iter} iterations", cost)


def scale_and_mask(voi: SphereVOI, volume, scale=DEFAULT_SCALE) -> BinaryVolume:
    """Voxels whose centres lie inside the sphere shrunk (in radius) by ``scale``.

    ``volume`` supplies dims and spacing; voxel (i, j, k) has its centre at
    (i * sx, j * sy, k * sz) mm.
    """
    dims, spacing = volume.dims, volume.spacing
    if not 0 < scale <= 1:
        raise ValueError("scale must lie in (0, 1]")
    radius = voi.radius * scale
    axes = [np.arange(n) * s for n, s in zip(dims, spacing)]
    x, y, z = np.meshgrid(*axes, indexing="ij")
    c = voi.center
    inside = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2 <= radius**2
    if not inside.any():
        logger.warning("VOI sphere does not cover any voxel centre")
    return BinaryVolume(inside, spacing)


def read_points(path) -> np.ndarray:
    """CSV with x_mm,y_mm,z_mm columns (a header row is optional)."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row[:3]])
            except ValueError:
                if rows:
                    raise
    return np.array(rows).reshape(-1, 3)
