"""Histogram feature vectors from per-voxel MF and anisotropy data."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .minkowski import COMPONENTS

AMF_CHANNELS = ("FA", "theta", "phi")
AMF_RANGES = {"FA": (0.0, 1.0), "theta": (0.0, 180.0), "phi": (0.0, 180.0)}
DEFAULT_BINS = 10


@dataclass(frozen=True)
class HistogramSpec:
    lo: float
    hi: float
    bin_count: int = DEFAULT_BINS

    def __post_init__(self):
        if self.bin_count < 1:
            raise ValueError("bin_count must be >= 1")
        if not self.lo <= self.hi:
            raise ValueError(f"need lo <= hi, got ({self.lo}, {self.hi})")

    @property
    def centers(self) -> np.ndarray:
        width = (self.hi - self.lo) / self.bin_count
        return self.lo + (np.arange(self.bin_count) + 0.5) * width


def bin_index(values, spec: HistogramSpec) -> np.ndarray:
    """Nearest-centre bin; ties go to the lower bin, out-of-range values clamp.

    With ``lo == hi`` everything at or below ``lo`` lands in the first bin and
    the rest in the last.
    """
    values = np.asarray(values, dtype=np.float64)
    n = spec.bin_count
    if spec.hi == spec.lo:
        return np.where(values <= spec.lo, 0, n - 1)
    scaled = (values - spec.lo) / (spec.hi - spec.lo) * n
    scaled = np.clip(scaled, 0.0, float(n))
    return np.maximum(np.ceil(scaled).astype(np.int64) - 1, 0)


def histogram(values, spec: HistogramSpec) -> np.ndarray:
    """Frequency-normalised counts (all zero for an empty input)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    counts = np.bincount(bin_index(values, spec), minlength=spec.bin_count).astype(np.float64)
    if len(values):
        counts /= len(values)
    return counts


@dataclass
class FeatureBlock:
    name: str
    values: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if not self.labels:
            if len(self.values) == 1:
                self.labels = (self.name,)
            else:
                self.labels = tuple(f"{self.name}[{i}]" for i in range(len(self.values)))


@dataclass
class FeatureVector:
    specimen_id: str
    blocks: list[FeatureBlock]

    @property
    def layout(self) -> tuple[tuple[str, int], ...]:
        return tuple((b.name, len(b.values)) for b in self.blocks)

    @property
    def labels(self) -> list[str]:
        return [label for b in self.blocks for label in b.labels]

    @property
    def values(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([b.values for b in self.blocks])


def amf_features(amap, components=COMPONENTS, channels=AMF_CHANNELS, bins=DEFAULT_BINS,
                 include_degenerate=True) -> list[FeatureBlock]:
    """One fixed-range histogram block per (component, channel), in the given order."""
    if not components or not channels:
        raise ValueError("select at least one component and one channel")
    blocks = []
    for comp in components:
        for ch in channels:
            spec = HistogramSpec(*AMF_RANGES[ch], bins)
            values = amap.channel(comp, ch, include_degenerate)
            blocks.append(FeatureBlock(f"AMF.{comp}.{ch}", histogram(values, spec)))
    return blocks


@dataclass(frozen=True)
class TrainLimits:
    limits: dict

    def spec(self, component, bins=DEFAULT_BINS) -> HistogramSpec:
        lo, hi = self.limits[component]
        return HistogramSpec(lo, hi, bins)


def imf_train_limits(tables) -> TrainLimits:
    """Componentwise min/max over all rows of the training specimens' tables."""
    tables = [t for t in tables if len(t)]
    if not tables:
        raise ValueError("need at least one training table with white voxels")
    columns = tables[0].columns
    stacked = np.concatenate([t.values for t in tables])
    lo, hi = stacked.min(axis=0), stacked.max(axis=0)
    return TrainLimits({c: (float(lo[i]), float(hi[i])) for i, c in enumerate(columns)})


def imf_features(table, limits: TrainLimits, component, bins=DEFAULT_BINS) -> FeatureBlock:
    return FeatureBlock(f"IMF.{component}", histogram(table.column(component),
                                                      limits.spec(component, bins)))


def assemble(specimen_id, groups, dxa_bmd=None) -> FeatureVector:
    """Concatenate blocks; a DXA BMD scalar, when given, leads."""
    blocks = []
    if dxa_bmd is not None:
        blocks.append(FeatureBlock("DXA_BMD", [dxa_bmd]))
    for group in groups:
        blocks.extend(group if isinstance(group, list) else [group])
    return FeatureVector(str(specimen_id), blocks)


def feature_matrix(vectors) -> np.ndarray:
    """Stack feature vectors, enforcing one shared block layout."""
    vectors = list(vectors)
    if not vectors:
        raise ValueError("no feature vectors")
    layout = vectors[0].layout
    for v in vectors[1:]:
        if v.layout != layout:
            raise ValueError(
                f"feature layout mismatch: {v.specimen_id} has {v.layout}, expected {layout}"
            )
    return np.vstack([v.values for v in vectors])


def write_feature_matrix(path, vectors, targets=None) -> None:
    """CSV: specimen_id, FL_kN (blank when unlabeled), one column per feature."""
    X = feature_matrix(vectors)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["specimen_id", "FL_kN", *vectors[0].labels])
        for q, v in enumerate(vectors):
            fl = "" if targets is None or targets[q] is None else repr(float(targets[q]))
            writer.writerow([v.specimen_id, fl, *(repr(float(x)) for x in X[q])])


def read_feature_matrix(path):
    """Returns ``(ids, targets or None, labels, X)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["specimen_id", "FL_kN"]:
            raise ValueError(f"{path}: not a feature matrix")
        rows = list(reader)
    ids = [r[0] for r in rows]
    targets = None
    if rows and all(r[1] != "" for r in rows):
        targets = np.array([float(r[1]) for r in rows])
    X = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), -1)
    return ids, targets, header[2:], X


def select_columns(labels, X, prefixes):
    """Columns whose label belongs to any of the named blocks."""
    keep = [i for i, lab in enumerate(labels)
            if any(lab == p or lab.startswith(p + "[") for p in prefixes)]
    if not keep:
        raise ValueError(f"no feature columns match {prefixes}")
    return X[:, keep]
