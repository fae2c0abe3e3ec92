"""Specimen loading, feature-group expansion and end-to-end evaluation."""
from __future__ import annotations

import ast
import csv
import logging
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .aniso_mf import SIGMA_RATIOS, anisotropy_map
from .features import AMF_CHANNELS, amf_features
from .learn import TrainConfig
from .local_mf import KERNEL_SIZES, local_mf, make_box_kernel, make_isotropic_gaussian
from .minkowski import COMPONENTS
from .stats_eval import ImfBlock, SplitPlan, StaticBlock, run_protocol
from .volume import BinaryVolume, load_mask, load_raw, threshold

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid pipeline configuration, detected before any work starts."""


@dataclass
class PipelineConfig:
    manifest: str | None = None
    threshold: float = 400.0
    kernel_sizes: tuple = KERNEL_SIZES
    sigma_ratios: tuple = SIGMA_RATIOS
    groups: tuple = ("DXA_BMD", "IMF.volume", "AMF.euler.FA/phi", "DXA_BMD+AMF.euler.FA/phi")
    methods: tuple = ("multireg", "svr")
    seed: int = 0
    iterations: int = 50
    train_fraction: float = 0.8
    bins: int = 10
    imf_kernel: str = "box"
    imf_sigma: float | None = None
    sigma_long: float | None = None
    svr_C: float = 1.0
    svr_epsilon: float = 0.1
    out_dir: str = "results"

    def validate(self, check_paths=True) -> "PipelineConfig":
        if check_paths:
            if not self.manifest:
                raise ConfigError("manifest path is required")
            if not Path(self.manifest).is_file():
                raise ConfigError(f"manifest not found: {self.manifest}")
        for name in ("kernel_sizes", "sigma_ratios", "groups", "methods"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        for size in self.kernel_sizes:
            if int(size) != size or size < 1 or size % 2 == 0:
                raise ConfigError(f"kernel size {size} is not a positive odd integer")
        for ratio in self.sigma_ratios:
            if ratio < 1:
                raise ConfigError(f"sigma ratio {ratio} must be >= 1")
        for g in self.groups:
            parse_group(g)
        for m in self.methods:
            try:
                TrainConfig(method=m)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.imf_kernel not in ("box", "gaussian"):
            raise ConfigError("imf_kernel must be 'box' or 'gaussian'")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        return self

    def train_configs(self) -> dict:
        return {m: TrainConfig(method=m, C=self.svr_C, epsilon=self.svr_epsilon)
                for m in self.methods}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("["):
        try:
            return tuple(ast.literal_eval(raw))
        except (ValueError, SyntaxError):
            inner = raw.strip("[]")
            return tuple(v.strip().strip("'\"") for v in inner.split(",") if v.strip())
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw.strip("'\"")


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read ``key = value`` lines (lists as ``[a, b]``); overrides win.

    Relative ``manifest`` paths resolve against the config file's directory.
    """
    known = {f.name for f in fields(PipelineConfig)}
    values = {}
    if path is not None:
        for n, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep or key not in known:
                raise ConfigError(f"{path}:{n}: unknown or malformed entry {line!r}")
            values[key] = _parse_value(raw)
        if "manifest" in values and not Path(values["manifest"]).is_absolute():
            values["manifest"] = str(Path(path).parent / values["manifest"])
    values.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("kernel_sizes", "sigma_ratios", "groups", "methods"):
        if key in values and not isinstance(values[key], (tuple, list)):
            values[key] = (values[key],)
        if key in values:
            values[key] = tuple(values[key])
    return PipelineConfig(**values)


# -- feature groups --------------------------------------------------------

_TOKEN = re.compile(r"^(DXA_BMD|IMF\.(\w+)|AMF\.(\w+)(?:\.([\w/]+))?)$")


@dataclass(frozen=True)
class GroupPart:
    kind: str  # "DXA", "IMF" or "AMF"
    component: str | None = None
    channels: tuple = ()


def parse_group(spec: str) -> list[GroupPart]:
    """``DXA_BMD+IMF.volume+AMF.euler.FA/phi`` -> parts (AMF channels default to all)."""
    parts = []
    for token in spec.split("+"):
        token = token.strip()
        m = _TOKEN.match(token)
        if not m:
            raise ConfigError(f"bad feature group token {token!r} in {spec!r}")
        if token == "DXA_BMD":
            parts.append(GroupPart("DXA"))
            continue
        comp = m.group(2) or m.group(3)
        if comp not in COMPONENTS:
            raise ConfigError(f"unknown MF component {comp!r} in {spec!r}")
        if m.group(2):
            parts.append(GroupPart("IMF", comp))
        else:
            channels = tuple(m.group(4).split("/")) if m.group(4) else AMF_CHANNELS
            bad = set(channels) - set(AMF_CHANNELS)
            if bad:
                raise ConfigError(f"unknown AMF channels {sorted(bad)} in {spec!r}")
            parts.append(GroupPart("AMF", comp, channels))
    return parts


def expand_groups(specs, kernel_sizes, sigma_ratios):
    """Group ids over the parameter grid: ``spec@k{size}`` or ``spec@k{size}r{ratio}``."""
    out = []
    for spec in specs:
        parts = parse_group(spec)
        kinds = {p.kind for p in parts}
        if kinds == {"DXA"}:
            out.append((spec, spec, None, None))
            continue
        ratios = sigma_ratios if "AMF" in kinds else (None,)
        for size in kernel_sizes:
            for ratio in ratios:
                suffix = f"@k{size}" + (f"r{ratio:g}" if ratio is not None else "")
                out.append((spec + suffix, spec, size, ratio))
    return out


# -- specimens ---------------------------------------------------------------


@dataclass
class Specimen:
    specimen_id: str
    binary: BinaryVolume
    fl_kn: float | None = None
    dxa_bmd: float | None = None
    _imf: dict = field(default_factory=dict, repr=False)
    _amf: dict = field(default_factory=dict, repr=False)

    def imf_table(self, size, kernel="box", sigma=None):
        key = (size, kernel, sigma)
        if key not in self._imf:
            if kernel == "box":
                k = make_box_kernel(size)
            else:
                k = make_isotropic_gaussian(size, sigma or size / 4.0)
            self._imf[key] = local_mf(self.binary, k)
        return self._imf[key]

    def amf_map(self, size, ratio, sigma_long=None):
        key = (size, ratio, sigma_long)
        if key not in self._amf:
            self._amf[key] = anisotropy_map(self.binary, size, ratio, sigma_long=sigma_long)
        return self._amf[key]


def binarize(volume, t, mask=None) -> BinaryVolume:
    binary = threshold(volume, t)
    if mask is not None:
        if mask.dims != binary.dims:
            raise ValueError("mask and volume dims differ")
        binary = BinaryVolume(binary.voxels & mask.voxels, binary.spacing)
    return binary


def _optional_float(text):
    text = (text or "").strip()
    return float(text) if text else None


def load_specimens(manifest, t=400.0) -> list[Specimen]:
    """Read a cohort manifest and threshold each volume inside its VOI mask."""
    manifest = Path(manifest)
    base = manifest.parent
    specimens = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            vol = load_raw(base / row["volume_path"])
            mask = load_mask(base / row["mask_path"]) if row.get("mask_path") else None
            specimens.append(Specimen(
                row["specimen_id"], binarize(vol, t, mask),
                _optional_float(row.get("FL_kN")),
                _optional_float(row.get("dxa_bmd_surrogate") or row.get("dxa_bmd")),
            ))
    return specimens


def group_blocks(spec, specimens, size=None, ratio=None, config=None):
    """Blocks for :func:`stats_eval.run_protocol` for one expanded group."""
    config = config or PipelineConfig()
    blocks = []
    for part in parse_group(spec):
        if part.kind == "DXA":
            if any(s.dxa_bmd is None for s in specimens):
                raise ValueError("DXA_BMD requested but missing for some specimens")
            blocks.append(StaticBlock([s.dxa_bmd for s in specimens], ("DXA_BMD",)))
        elif part.kind == "IMF":
            tables = [s.imf_table(size, config.imf_kernel, config.imf_sigma) for s in specimens]
            blocks.append(ImfBlock(tables, part.component, config.bins))
        else:
            rows = []
            for s in specimens:
                amap = s.amf_map(size, ratio, config.sigma_long)
                fb = amf_features(amap, [part.component], part.channels, config.bins)
                rows.append(np.concatenate([b.values for b in fb]))
            blocks.append(StaticBlock(np.vstack(rows)))
    return blocks


def evaluate(specimens, config: PipelineConfig, keep_records=False):
    """Run the repeated-split protocol for every configured group and method."""
    if any(s.fl_kn is None for s in specimens):
        raise ValueError("every specimen needs a failure load for evaluation")
    targets = np.array([s.fl_kn for s in specimens])
    groups = {}
    for gid, spec, size, ratio in expand_groups(config.groups, config.kernel_sizes,
                                                config.sigma_ratios):
        logger.info("features for %s", gid)
        groups[gid] = group_blocks(spec, specimens, size, ratio, config)
    plan = SplitPlan(len(specimens), config.seed, config.iterations, config.train_fraction)
    return run_protocol(groups, targets, config.methods, plan, config.train_configs(),
                        keep_records=keep_records)


def with_overrides(config: PipelineConfig, **kw) -> PipelineConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
