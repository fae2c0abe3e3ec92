"""Volumetric containers, thresholding and raw file I/O.

Arrays are indexed ``[i, j, k]`` with shape ``(nx, ny, nz)``. On disk the
payload is written x-fastest (Fortran order), which is declared in the
sidecar header so files are self-describing.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VALUE_KINDS = ("HU", "BMD")

_DTYPES = {
    "float32": np.dtype("<f4"),
    "int16": np.dtype("<i2"),
    "uint8": np.dtype("u1"),
}


class VolumeFormatError(ValueError):
    """Raised when a raw payload does not match its header."""


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    """3D grid of scalar voxel values with anisotropic spacing (mm)."""

    values: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    value_kind: str = "BMD"

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ValueError(f"expected a non-empty 3D array, got shape {values.shape}")
        if values.dtype != np.float32:
            values = values.astype(np.float32)
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not s > 0 for s in spacing):
            raise ValueError(f"spacing components must be > 0, got {self.spacing}")
        if self.value_kind not in VALUE_KINDS:
            raise ValueError(f"value_kind must be one of {VALUE_KINDS}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)

    def __eq__(self, other):
        if not isinstance(other, ScalarVolume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.value_kind == other.value_kind
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass(frozen=True, eq=False)
class BinaryVolume:
    """3D grid of foreground (white, True) and background voxels."""

    voxels: np.ndarray
    spacing: tuple[float, float, float] = field(default=(1.0, 1.0, 1.0))

    def __post_init__(self):
        voxels = np.asarray(self.voxels)
        if voxels.ndim != 3 or min(voxels.shape) < 1:
            raise ValueError(f"expected a non-empty 3D array, got shape {voxels.shape}")
        voxels = voxels.astype(bool, copy=True)
        voxels.setflags(write=False)
        object.__setattr__(self, "voxels", voxels)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.voxels.shape)

    @property
    def n_white(self) -> int:
        return int(np.count_nonzero(self.voxels))

    def white_indices(self) -> np.ndarray:
        """(N_WP, 3) array of white voxel (i, j, k) indices in x-fastest scan order."""
        kji = np.argwhere(self.voxels.transpose(2, 1, 0))
        return np.ascontiguousarray(kji[:, ::-1], dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, BinaryVolume):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.voxels, other.voxels)


def threshold(volume: ScalarVolume, t: float) -> BinaryVolume:
    """White iff value >= t."""
    return BinaryVolume(volume.values >= t, spacing=volume.spacing)


def linear_index(i: int, j: int, k: int, dims) -> int:
    """Position of voxel (i, j, k) in an x-fastest payload."""
    nx, ny, _ = dims
    return i + nx * (j + ny * k)


def header_path(path) -> Path:
    return Path(str(path) + ".hdr")


def _format_header(fields: dict) -> str:
    return "".join(f"{key}: {value}\n" for key, value in fields.items())


def read_header(path) -> dict:
    """Parse a ``key: value`` sidecar header into typed fields."""
    fields = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition(":")
            if not sep:
                raise VolumeFormatError(f"malformed header line: {line!r}")
            fields[key.strip()] = value.strip()
    missing = {"dims", "spacing_mm", "value_kind", "dtype"} - fields.keys()
    if missing:
        raise VolumeFormatError(f"header missing keys: {sorted(missing)}")
    if fields.get("order", "x-fastest") != "x-fastest":
        raise VolumeFormatError(f"unsupported order {fields['order']!r}")
    if fields.get("endianness", "little") != "little":
        raise VolumeFormatError(f"unsupported endianness {fields['endianness']!r}")
    if fields["dtype"] not in _DTYPES:
        raise VolumeFormatError(f"unsupported dtype {fields['dtype']!r}")
    return {
        "dims": tuple(int(v) for v in fields["dims"].split()),
        "spacing": tuple(float(v) for v in fields["spacing_mm"].split()),
        "value_kind": fields["value_kind"],
        "dtype": fields["dtype"],
    }


def _read_payload(path, header: dict) -> np.ndarray:
    dims = header["dims"]
    if len(dims) != 3:
        raise VolumeFormatError(f"dims must have 3 entries, got {dims}")
    dtype = _DTYPES[header["dtype"]]
    raw = Path(path).read_bytes()
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(raw) != expected:
        raise VolumeFormatError(
            f"{path}: header declares {int(np.prod(dims))} voxels "
            f"({expected} bytes) but payload has {len(raw)} bytes"
        )
    return np.frombuffer(raw, dtype=dtype).reshape(dims, order="F")


def load_raw(path, header=None) -> ScalarVolume:
    """Load a scalar volume; ``header`` defaults to the ``<path>.hdr`` sidecar.

    16-bit integer payloads are widened to float32.
    """
    if header is None or isinstance(header, (str, os.PathLike)):
        header = read_header(header or header_path(path))
    if header["value_kind"] not in VALUE_KINDS:
        raise VolumeFormatError(f"{path} is not a scalar volume ({header['value_kind']})")
    data = _read_payload(path, header)
    return ScalarVolume(data.astype(np.float32), header["spacing"], header["value_kind"])


def save_raw(volume: ScalarVolume, path) -> dict:
    """Write the float32 payload and its sidecar header; returns the header fields."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(volume.values.astype("<f4").tobytes(order="F"))
    fields = {
        "dims": " ".join(str(d) for d in volume.dims),
        "spacing_mm": " ".join(repr(s) for s in volume.spacing),
        "value_kind": volume.value_kind,
        "dtype": "float32",
        "endianness": "little",
        "order": "x-fastest",
    }
    header_path(path).write_text(_format_header(fields))
    return fields


def load_mask(path) -> BinaryVolume:
    header = read_header(header_path(path))
    if header["value_kind"] != "MASK":
        raise VolumeFormatError(f"{path} is not a mask volume")
    return BinaryVolume(_read_payload(path, header) != 0, header["spacing"])


def save_mask(mask: BinaryVolume, path) -> dict:
    """Write a 0/1 byte payload with a ``value_kind: MASK`` header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(mask.voxels.astype(np.uint8).tobytes(order="F"))
    fields = {
        "dims": " ".join(str(d) for d in mask.dims),
        "spacing_mm": " ".join(repr(s) for s in mask.spacing),
        "value_kind": "MASK",
        "dtype": "uint8",
        "endianness": "little",
        "order": "x-fastest",
    }
    header_path(path).write_text(_format_header(fields))
    return fields
