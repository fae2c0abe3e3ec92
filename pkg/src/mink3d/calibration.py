"""Hounsfield-unit to BMD conversion with a two-insert calibration phantom."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .volume import ScalarVolume

logger = logging.getLogger(__name__)

# Plausible trabecular BMD range after conversion (mg/cm^3).
BMD_RANGE = (-300.0, 1400.0)


@dataclass(frozen=True)
class PhantomCalibration:
    """Measured attenuations of the water-like and bone-like phantom inserts.

    ``ha_w`` and ``ha_b`` are the inserts' hydroxyapatite densities in mg/cm^3.
    """

    hu_w: float
    hu_b: float
    ha_w: float = 0.0
    ha_b: float = 200.0

    def __post_init__(self):
        if self.hu_b == self.hu_w:
            raise ValueError("degenerate phantom: HU_B equals HU_W")

    @property
    def slope(self) -> float:
        return self.ha_b / (self.hu_b - self.hu_w)


def hu_to_bmd(hu, calib: PhantomCalibration):
    """BMD = HA_B / (HU_B - HU_W) * (HU - HU_W)."""
    return calib.slope * (np.asarray(hu, dtype=np.float64) - calib.hu_w)


def calibrate_volume(volume: ScalarVolume, per_slice) -> ScalarVolume:
    """Convert an HU volume slice by slice (along z).

    ``per_slice`` holds either one calibration per z-slice or a single
    global calibration.
    """
    if volume.value_kind != "HU":
        raise ValueError(f"expected an HU volume, got {volume.value_kind}")
    per_slice = list(per_slice)
    nz = volume.dims[2]
    if len(per_slice) == 1:
        per_slice = per_slice * nz
    if len(per_slice) != nz:
        raise ValueError(f"need 1 or {nz} calibrations, got {len(per_slice)}")
    out = np.empty(volume.dims, dtype=np.float64)
    for k, calib in enumerate(per_slice):
        out[:, :, k] = hu_to_bmd(volume.values[:, :, k], calib)
    n_out = count_out_of_range(out)
    if n_out:
        logger.warning("%d voxels outside BMD range %s after calibration", n_out, BMD_RANGE)
    return ScalarVolume(out.astype(np.float32), volume.spacing, "BMD")


def count_out_of_range(bmd, bounds=BMD_RANGE) -> int:
    bmd = np.asarray(bmd)
    return int(np.count_nonzero((bmd < bounds[0]) | (bmd > bounds[1])))


def read_calibration(path) -> list[PhantomCalibration]:
    """Read ``slice_index, HU_W, HU_B`` rows (a single row means global).

    Blank lines, ``#`` comments and a non-numeric header row are skipped.
    """
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.replace(",", " ").split()]
        try:
            idx, hu_w, hu_b = int(parts[0]), float(parts[1]), float(parts[2])
        except (ValueError, IndexError):
            if rows:
                raise ValueError(f"bad calibration row: {line!r}")
            continue
        rows.append((idx, PhantomCalibration(hu_w, hu_b)))
    if not rows:
        raise ValueError(f"{path}: no calibration rows")
    rows.sort(key=lambda r: r[0])
    if len(rows) > 1 and [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: slice indices must be 0..{len(rows) - 1}")
    return [c for _, c in rows]


def write_calibration(path, per_slice) -> None:
    lines = ["slice_index,HU_W,HU_B"]
    lines += [f"{k},{c.hu_w!r},{c.hu_b!r}" for k, c in enumerate(per_slice)]
    Path(path).write_text("\n".join(lines) + "\n")
