"""Anisotropic Minkowski functionals.

Each white voxel gets one kernel-weighted MF response per direction of a
bank of elongated Gaussian kernels. For every MF component the responses
are summarised by the second-moment tensor ``M = sum_d r_d**2 d d^T``, whose
eigen-decomposition yields the fractional anisotropy and the orientation
angles (theta, phi) of the principal axis.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .local_mf import Kernel3D, _check_size, kernel_offsets, weighted_responses
from .minkowski import COMPONENTS
from .volume import BinaryVolume

SIGMA_RATIOS = (2, 4, 8)


def _canonical_sign(vectors):
    """Flip each vector so that its first nonzero component is positive."""
    vectors = np.array(vectors, dtype=np.float64)
    flat = vectors.reshape(-1, 3)
    nonzero = np.abs(flat) > 1e-12
    first = np.where(nonzero.any(axis=1), nonzero.argmax(axis=1), 0)
    signs = np.where(flat[np.arange(len(flat)), first] < 0, -1.0, 1.0)
    return (flat * signs[:, None]).reshape(vectors.shape)


@dataclass(frozen=True, eq=False)
class DirectionBank:
    directions: np.ndarray

    def __post_init__(self):
        d = np.array(self.directions, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 3 or len(d) < 3:
            raise ValueError("a direction bank needs at least 3 vectors in 3D")
        if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > 1e-12):
            raise ValueError("bank directions must be unit vectors")
        gram = np.abs(d @ d.T)
        np.fill_diagonal(gram, 0.0)
        if np.any(gram >= 1.0 - 1e-12):
            raise ValueError("bank directions must be pairwise non-collinear")
        if np.linalg.matrix_rank(d) < 3:
            raise ValueError("bank directions must span 3D")
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)

    def __len__(self):
        return len(self.directions)


def direction_bank_default() -> DirectionBank:
    """The 13 distinct axes through a voxel's 26-neighbourhood."""
    axes = []
    for off in itertools.product((-1, 0, 1), repeat=3):
        v = np.array(off, dtype=np.float64)
        if not v.any():
            continue
        v = _canonical_sign(v / np.linalg.norm(v))
        if not any(np.allclose(v, a) for a in axes):
            axes.append(v)
    # faces, then edges, then corners
    axes.sort(key=lambda a: (np.count_nonzero(a), tuple(-a)))
    return DirectionBank(np.array(axes))


def make_oriented_gaussian(size: int, sigma_long: float, ratio: float, direction) -> Kernel3D:
    """Gaussian elongated along ``direction``, peak weight 1.

    The standard deviation is ``sigma_long`` along the direction and
    ``sigma_long / ratio`` across it.
    """
    size = _check_size(size)
    if not sigma_long > 0:
        raise ValueError(f"sigma_long must be > 0, got {sigma_long}")
    if not ratio >= 1:
        raise ValueError(f"ratio must be >= 1, got {ratio}")
    d = np.asarray(direction, dtype=np.float64)
    if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit 3-vector")
    offsets = kernel_offsets(size)
    along2 = (offsets @ d) ** 2
    across2 = (offsets**2).sum(axis=-1) - along2
    q = (along2 + ratio**2 * across2) / sigma_long**2
    sigma_short = sigma_long / ratio
    return Kernel3D(
        np.exp(-0.5 * q),
        kind="oriented_gaussian",
        sigma=(float(sigma_long), float(sigma_short), float(sigma_short)),
        orientation=tuple(float(x) for x in d),
    )


def default_sigma_long(size: int) -> float:
    return size / 4.0


def directional_responses(vol: BinaryVolume, bank: DirectionBank, size, sigma_long=None,
                          ratio=4, backend=None):
    """Returns ``(indices, responses)`` with responses of shape (N_WP, n_dirs, 4)."""
    if sigma_long is None:
        sigma_long = default_sigma_long(size)
    kernels = [make_oriented_gaussian(size, sigma_long, ratio, d) for d in bank.directions]
    return weighted_responses(vol, kernels, backend=backend)


def _tensors(responses, directions):
    # responses (..., D) -> (..., 3, 3)
    outer = np.einsum("di,dj->dij", directions, directions)
    return np.einsum("...d,dij->...ij", np.asarray(responses, dtype=np.float64) ** 2, outer)


def orientation_tensor(responses, bank: DirectionBank):
    """Eigenvalues (descending) and principal eigenvector of the response tensor.

    ``responses`` holds one value per bank direction (leading batch axes
    allowed). Returns ``(eigenvalues, principal, degenerate)``; degenerate
    entries have all-zero responses and a zero principal vector.
    """
    responses = np.asarray(responses, dtype=np.float64)
    if responses.shape[-1] != len(bank):
        raise ValueError("one response per bank direction expected")
    m = _tensors(responses, bank.directions)
    evals, evecs = np.linalg.eigh(m)
    evals = evals[..., ::-1]
    principal = evecs[..., :, -1]
    degenerate = ~np.any(responses != 0, axis=-1)
    principal = np.where(degenerate[..., None], 0.0, _canonical_sign(principal))
    return evals, principal, degenerate


def _fa(evals):
    l1, l2, l3 = np.moveaxis(np.clip(evals, 0.0, None), -1, 0)
    num = np.sqrt((l1 - l2) ** 2 + (l1 - l3) ** 2 + (l2 - l3) ** 2)
    den = np.sqrt(2.0 * (l1**2 + l2**2 + l3**2))
    with np.errstate(invalid="ignore", divide="ignore"):
        fa = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(fa, 0.0, 1.0)


def fractional_anisotropy(l1, l2, l3) -> float:
    """Normalised eigenvalue dispersion in [0, 1]."""
    if l1 == 0 and l2 == 0 and l3 == 0:
        raise ValueError("fractional anisotropy undefined for all-zero eigenvalues")
    return float(_fa(np.array([l1, l2, l3], dtype=np.float64)))


def principal_angles(vector):
    """Orientation angles in degrees, both folded into [0, 180).

    theta is the azimuth of the xy-projection measured from +x (0 when the
    projection vanishes); phi is the elevation of the axis above the
    xy-plane. The axis sign is normalised first so antipodal vectors agree.
    """
    v = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(norm == 0):
        raise ValueError("orientation undefined for a zero vector")
    v = _canonical_sign(v / norm[..., None])
    # components treated as zero by the sign rule must be exactly zero here
    v = np.where(np.abs(v) > 1e-12, v, 0.0)
    x, y, z = np.moveaxis(v, -1, 0)
    rho = np.hypot(x, y)
    theta = np.where(rho > 1e-12, np.degrees(np.arctan2(y, x)), 0.0) % 180.0
    phi = np.degrees(np.arctan2(z, rho)) % 180.0
    # exact 180 can appear from -0.0 rounding
    theta = np.where(theta >= 180.0, 0.0, theta)
    phi = np.where(phi >= 180.0, 0.0, phi)
    if v.ndim == 1:
        return float(theta), float(phi)
    return theta, phi


def axis_from_angles(theta, phi):
    """Unit axis with the given folded angles; inverse of :func:`principal_angles`.

    Sign normalisation keeps azimuth and elevation within (-90, 90], so
    folded values above 90 degrees stand for negative angles.
    """
    az = np.radians(np.where(np.asarray(theta) > 90.0, np.asarray(theta) - 180.0, theta))
    el = np.radians(np.where(np.asarray(phi) > 90.0, np.asarray(phi) - 180.0, phi))
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)


@dataclass(frozen=True, eq=False)
class AnisotropyMap:
    """Per white voxel and MF component: FA, theta, phi, eigenvalues, degeneracy."""

    indices: np.ndarray
    fa: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    eigenvalues: np.ndarray
    degenerate: np.ndarray
    components: tuple[str, ...] = COMPONENTS

    def __len__(self):
        return len(self.indices)

    def channel(self, component: str, name: str, include_degenerate=True) -> np.ndarray:
        c = self.components.index(component)
        values = {"FA": self.fa, "theta": self.theta, "phi": self.phi}[name][:, c]
        if not include_degenerate:
            values = values[~self.degenerate[:, c]]
        return values


def summarize(indices, responses, bank: DirectionBank) -> AnisotropyMap:
    """Reduce (N, D, 4) directional responses to an :class:`AnisotropyMap`."""
    per_comp = np.moveaxis(np.asarray(responses, dtype=np.float64), 1, -1)  # (N, 4, D)
    evals, principal, degenerate = orientation_tensor(per_comp, bank)
    fa = np.where(degenerate, 0.0, _fa(evals))
    n, c = degenerate.shape
    theta = np.zeros((n, c))
    phi = np.zeros((n, c))
    ok = ~degenerate
    if ok.any():
        theta[ok], phi[ok] = principal_angles(principal[ok])
    return AnisotropyMap(indices, fa, theta, phi, evals, degenerate)


def anisotropy_map(vol: BinaryVolume, size: int, ratio=4, bank=None, sigma_long=None,
                   backend=None) -> AnisotropyMap:
    bank = bank or direction_bank_default()
    indices, responses = directional_responses(vol, bank, size, sigma_long, ratio, backend)
    return summarize(indices, responses, bank)


MAP_COLUMNS = ("i", "j", "k", "component", "FA", "theta", "phi",
               "lambda1", "lambda2", "lambda3", "degenerate")


def write_map(amap: AnisotropyMap, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MAP_COLUMNS)
        for q, idx in enumerate(amap.indices):
            for c, comp in enumerate(amap.components):
                writer.writerow([
                    *map(int, idx), comp,
                    repr(float(amap.fa[q, c])), repr(float(amap.theta[q, c])),
                    repr(float(amap.phi[q, c])),
                    *(repr(float(v)) for v in amap.eigenvalues[q, c]),
                    int(amap.degenerate[q, c]),
                ])


def read_map(path) -> AnisotropyMap:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != MAP_COLUMNS:
            raise ValueError(f"{path}: not an anisotropy map")
        rows = list(reader)
    comps = list(dict.fromkeys(r[3] for r in rows)) or list(COMPONENTS)
    nc = len(comps)
    if len(rows) % nc:
        raise ValueError(f"{path}: incomplete component rows")
    n = len(rows) // nc
    indices = np.array([[int(v) for v in rows[q * nc][:3]] for q in range(n)],
                       dtype=np.int64).reshape(-1, 3)
    num = np.array([[float(v) for v in r[4:10]] for r in rows]).reshape(n, nc, 6)
    deg = np.array([int(r[10]) for r in rows], dtype=bool).reshape(n, nc)
    return AnisotropyMap(indices, num[..., 0], num[..., 1], num[..., 2], num[..., 3:],
                         deg, tuple(comps))
