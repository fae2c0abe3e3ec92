"""Synthetic trabecular-like volumes with known orientation and strength.

Structure voxels get BMD around 600 mg/cm^3 and background around 100, so a
threshold at 400 recovers the generated structure.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .volume import BinaryVolume, ScalarVolume, save_mask, save_raw

PHANTOM_KINDS = ("rod_lattice", "plate_stack", "isotropic_blobs")
STRUCTURE_BMD = 600.0
BACKGROUND_BMD = 100.0


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "rod_lattice"
    dims: tuple[int, int, int] = (32, 32, 32)
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    fraction: float = 0.2
    thickness: float = 3.0
    seed: int = 0
    noise_sigma: float = 30.0
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"kind must be one of {PHANTOM_KINDS}")
        if not 0 < self.fraction < 1:
            raise ValueError("fraction must lie in (0, 1)")
        if not self.thickness > 0:
            raise ValueError("thickness must be > 0")
        if min(self.dims) < 1:
            raise ValueError("dims must be positive")


@dataclass(frozen=True, eq=False)
class SyntheticSpecimen:
    volume: ScalarVolume
    structure: np.ndarray
    direction: tuple[float, float, float]
    params: dict = field(default_factory=dict)
    fl_kn: float | None = None
    dxa_bmd: float | None = None

    @property
    def mask(self) -> BinaryVolume:
        return BinaryVolume(np.ones(self.structure.shape, dtype=bool), self.volume.spacing)


def _unit(direction):
    d = np.asarray(direction, dtype=np.float64)
    n = np.linalg.norm(d)
    if d.shape != (3,) or n == 0:
        raise ValueError("direction must be a nonzero 3-vector")
    return d / n


def _perp_basis(d):
    helper = np.eye(3)[np.argmin(np.abs(d))]
    u = np.cross(d, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(d, u)


def _centres(dims):
    grids = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in dims), indexing="ij")
    return np.stack(grids, axis=-1)


def rod_structure(dims, direction, fraction, thickness, rng) -> np.ndarray:
    """Parallel rods on a jittered square grid across ``direction``."""
    d = _unit(direction)
    u, w = _perp_basis(d)
    radius = thickness / 2.0
    spacing = np.sqrt(np.pi * radius**2 / fraction)
    if spacing < thickness:
        raise ValueError(f"fraction {fraction} infeasible for rod thickness {thickness}")
    p = _centres(dims)
    s, t = p @ u, p @ w
    jitter = 0.25 * (spacing - thickness)
    out = np.zeros(dims, dtype=bool)
    s_lo, s_hi = s.min() - spacing, s.max() + spacing
    t_lo, t_hi = t.min() - spacing, t.max() + spacing
    s0, t0 = rng.uniform(0, spacing, size=2)
    for cs in np.arange(s_lo + s0, s_hi, spacing):
        for ct in np.arange(t_lo + t0, t_hi, spacing):
            js, jt = rng.uniform(-jitter, jitter, size=2)
            out |= (s - cs - js) ** 2 + (t - ct - jt) ** 2 <= radius**2
    return out


def plate_structure(dims, direction, fraction, thickness, rng) -> np.ndarray:
    """Parallel plates normal to ``direction``."""
    d = _unit(direction)
    spacing = thickness / fraction
    if spacing < 2 * thickness:
        raise ValueError(f"fraction {fraction} infeasible for plate thickness {thickness}")
    h = _centres(dims) @ d
    jitter = 0.25 * (spacing - thickness)
    out = np.zeros(dims, dtype=bool)
    start = h.min() - spacing + rng.uniform(0, spacing)
    for c in np.arange(start, h.max() + spacing, spacing):
        c += rng.uniform(-jitter, jitter)
        out |= np.abs(h - c) <= thickness / 2.0
    return out


def blob_structure(dims, fraction, radius, rng, out=None) -> np.ndarray:
    """Random overlapping balls added until the white fraction reaches ``fraction``."""
    p = _centres(dims)
    out = np.zeros(dims, dtype=bool) if out is None else out.copy()
    target = fraction * out.size
    base = out.sum()
    if fraction >= 1:
        raise ValueError("fraction must be < 1")
    for _ in range(100000):
        if out.sum() - base >= target:
            break
        c = rng.uniform(0, 1, size=3) * (np.array(dims) - 1)
        out |= ((p - c) ** 2).sum(axis=-1) <= radius**2
    return out


def to_bmd(structure, noise_sigma, rng, spacing=(1.0, 1.0, 1.0)) -> ScalarVolume:
    values = np.where(structure, STRUCTURE_BMD, BACKGROUND_BMD)
    values = values + rng.normal(0.0, noise_sigma, size=structure.shape)
    return ScalarVolume(values.astype(np.float32), spacing, "BMD")


def generate(spec: PhantomSpec) -> SyntheticSpecimen:
    rng = np.random.default_rng(spec.seed)
    d = tuple(_unit(spec.direction))
    if spec.kind == "rod_lattice":
        structure = rod_structure(spec.dims, d, spec.fraction, spec.thickness, rng)
    elif spec.kind == "plate_stack":
        structure = plate_structure(spec.dims, d, spec.fraction, spec.thickness, rng)
    else:
        structure = blob_structure(spec.dims, spec.fraction, spec.thickness, rng)
    volume = to_bmd(structure, spec.noise_sigma, rng, spec.spacing)
    return SyntheticSpecimen(volume, structure, d, {"spec": spec})


@dataclass(frozen=True)
class CohortConfig:
    """Generation constants for a synthetic strength cohort.

    FL = intercept + bmd_coef * mean_bmd + align_coef * alignment + noise,
    where ``alignment`` is the share of structure voxels that belong to
    x-aligned rods (the rest are isotropic blobs).
    """

    dims: tuple[int, int, int] = (24, 24, 24)
    fraction_range: tuple[float, float] = (0.12, 0.3)
    thickness: float = 3.0
    blob_radius: float = 2.5
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    noise_sigma: float = 30.0
    intercept: float = 0.0
    bmd_coef: float = 0.02
    align_coef: float = 3.0
    fl_noise: float = 0.1
    dxa_scale: float = 0.004
    dxa_noise: float = 0.02


def ground_truth_fl(mean_bmd, alignment, config: CohortConfig = CohortConfig(), rng=None) -> float:
    noise = 0.0 if rng is None or config.fl_noise == 0 else rng.normal(0.0, config.fl_noise)
    return float(config.intercept + config.bmd_coef * mean_bmd
                 + config.align_coef * alignment + noise)


def mixed_specimen(index: int, seed: int, config: CohortConfig = CohortConfig()) -> SyntheticSpecimen:
    """One cohort member: x-aligned rods plus isotropic blobs."""
    rng = np.random.default_rng([seed, index])
    fraction = rng.uniform(*config.fraction_range)
    share = rng.uniform(0.0, 1.0)
    rods = np.zeros(config.dims, dtype=bool)
    if share * fraction > 0.01:
        rods = rod_structure(config.dims, config.direction, share * fraction,
                             config.thickness, rng)
    structure = blob_structure(config.dims, (1 - share) * fraction, config.blob_radius,
                               rng, out=rods)
    alignment = float(rods.sum() / max(structure.sum(), 1))
    volume = to_bmd(structure, config.noise_sigma, rng)
    mean_bmd = float(volume.values.astype(np.float64).mean())
    fl = ground_truth_fl(mean_bmd, alignment, config, rng)
    dxa = config.dxa_scale * mean_bmd + rng.normal(0.0, config.dxa_noise)
    params = {"fraction": fraction, "alignment": alignment, "mean_bmd": mean_bmd}
    return SyntheticSpecimen(volume, structure, tuple(_unit(config.direction)), params,
                             fl_kn=fl, dxa_bmd=float(dxa))


def generate_cohort(n: int, seed: int, config: CohortConfig = CohortConfig()):
    return [mixed_specimen(j, seed, config) for j in range(n)]


MANIFEST_COLUMNS = ("specimen_id", "FL_kN", "dxa_bmd_surrogate", "volume_path", "mask_path")


def write_cohort(specimens, out_dir) -> Path:
    """Write volumes, full-extent VOI masks and ``manifest.csv``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for j, spec in enumerate(specimens):
            sid = f"S{j:03d}"
            vol_path = out_dir / f"{sid}_bmd.raw"
            mask_path = out_dir / f"{sid}_voi.raw"
            save_raw(spec.volume, vol_path)
            save_mask(spec.mask, mask_path)
            writer.writerow([sid, repr(spec.fl_kn), repr(spec.dxa_bmd),
                             vol_path.name, mask_path.name])
    return manifest
