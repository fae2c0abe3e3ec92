"""Repeated-split evaluation, RMSE distributions and paired significance tests."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .features import TrainLimits, histogram, imf_train_limits
from .learn import TrainConfig, fit


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(truth)}")
    if len(pred) == 0:
        raise ValueError("rmse of an empty sample")
    d = np.abs(pred - truth)
    scale = d.max()
    if scale == 0 or not np.isfinite(scale):
        return float(scale)
    # scaling keeps tiny residuals from underflowing to an RMSE of zero
    d = d / scale
    return float(scale * np.sqrt(d @ d / len(d)))


def pearson_r(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) != len(b) or len(a) < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = da @ da, db @ db
    if saa == 0 or sbb == 0:
        raise ValueError("pearson_r undefined for zero variance")
    return float(np.clip(da @ db / math.sqrt(saa * sbb), -1.0, 1.0))


# -- splits ---------------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    """Seeded 80/20 partitions; iteration ``t`` draws from ``(seed, t)`` alone."""

    n_specimens: int
    seed: int = 0
    iterations: int = 50
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.n_specimens < 2:
            raise ValueError("need at least 2 specimens")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 1 <= self.n_train < self.n_specimens:
            raise ValueError("split leaves an empty train or test set")

    @property
    def n_train(self) -> int:
        return int(math.floor(self.train_fraction * self.n_specimens + 0.5))

    def split(self, iteration: int):
        perm = np.random.default_rng([self.seed, iteration]).permutation(self.n_specimens)
        return np.sort(perm[: self.n_train]), np.sort(perm[self.n_train:])

    def splits(self):
        return [self.split(t) for t in range(self.iterations)]


# -- feature blocks fitted per split ------------------------------------


class StaticBlock:
    """Per-specimen features that need no training statistics."""

    def __init__(self, matrix, labels=()):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim == 1:
            self.matrix = self.matrix[:, None]
        self.labels = tuple(labels)

    def __len__(self):
        return len(self.matrix)

    def fit_transform(self, train, test):
        return self.matrix[train], self.matrix[test], None


class ImfBlock:
    """IMF histogram whose bin range comes from the training specimens only."""

    def __init__(self, tables, component, bins=10):
        self.tables = list(tables)
        self.component = component
        self.bins = bins

    def __len__(self):
        return len(self.tables)

    def limits_for(self, train) -> TrainLimits:
        return imf_train_limits([self.tables[i] for i in train])

    def fit_transform(self, train, test):
        limits = self.limits_for(train)
        spec = limits.spec(self.component, self.bins)

        def rows(idx):
            return np.vstack([histogram(self.tables[i].column(self.component), spec)
                              for i in idx])

        return rows(train), rows(test), limits


@dataclass
class RMSEDistribution:
    group: str
    method: str
    values: np.ndarray

    @property
    def summary(self) -> dict:
        v = self.values
        q25, med, q75 = np.percentile(v, [25, 50, 75])
        return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
                "q25": float(q25), "median": float(med), "q75": float(q75)}


@dataclass
class IterationRecord:
    group: str
    method: str
    iteration: int
    train: np.ndarray
    test: np.ndarray
    theta: np.ndarray
    block_state: list = field(default_factory=list)


def _as_blocks(group):
    if isinstance(group, (StaticBlock, ImfBlock)):
        return [group]
    if isinstance(group, np.ndarray):
        return [StaticBlock(group)]
    return [g if isinstance(g, (StaticBlock, ImfBlock)) else StaticBlock(g) for g in group]


def run_protocol(groups, targets, methods, plan: SplitPlan, configs=None, keep_records=False):
    """Evaluate every (group, method) over the plan's shared splits.

    ``groups`` maps a group id to a block, a feature matrix, or a list of
    those (concatenated column-wise). ``configs`` maps a method name to its
    :class:`TrainConfig`. Returns ``(distributions, records)``.
    """
    targets = np.asarray(targets, dtype=np.float64)
    configs = dict(configs or {})
    group_blocks = {name: _as_blocks(g) for name, g in groups.items()}
    for name, blocks in group_blocks.items():
        for b in blocks:
            if len(b) != len(targets):
                raise ValueError(f"group {name!r} covers {len(b)} specimens, expected {len(targets)}")
    if plan.n_specimens != len(targets):
        raise ValueError("split plan size does not match the number of specimens")
    splits = plan.splits()
    distributions, records = [], []
    for name, blocks in group_blocks.items():
        for method in methods:
            config = configs.get(method) or TrainConfig(method=method)
            values = np.empty(len(splits))
            for t, (train, test) in enumerate(splits):
                parts = [b.fit_transform(train, test) for b in blocks]
                X_train = np.hstack([p[0] for p in parts])
                X_test = np.hstack([p[1] for p in parts])
                model = fit(X_train, targets[train], config)
                values[t] = rmse(model.predict(X_test), targets[test])
                if keep_records:
                    records.append(IterationRecord(name, config.method, t, train, test,
                                                   model.theta.copy(), [p[2] for p in parts]))
            distributions.append(RMSEDistribution(name, config.method, values))
    return distributions, records


def write_results(path, distributions) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "method", "iteration", "rmse"])
        for dist in distributions:
            for t, v in enumerate(dist.values):
                writer.writerow([dist.group, dist.method, t, repr(float(v))])


def read_results(path):
    by_key = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            by_key.setdefault((row["group"], row["method"]), []).append(
                (int(row["iteration"]), float(row["rmse"])))
    return [RMSEDistribution(g, m, np.array([v for _, v in sorted(rows)]))
            for (g, m), rows in by_key.items()]


# -- significance ----------------------------------------------------------


@dataclass(frozen=True)
class WilcoxonResult:
    p_value: float
    statistic: float  # W+, sum of ranks of positive differences
    n_effective: int
    method: str
    all_zero: bool = False


def _signed_ranks(a, b):
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    d = d[d != 0]
    absd = np.abs(d)
    order = np.argsort(absd, kind="mergesort")
    ranks = np.empty(len(d))
    sorted_abs = absd[order]
    i = 0
    while i < len(d):
        j = i
        while j + 1 < len(d) and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return d, ranks


def exact_null_distribution(ranks):
    """P(W+ = w) over all 2**n sign patterns, indexed by 2*w (ranks may be halves)."""
    doubled = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    dist = np.zeros(int(doubled.sum()) + 1)
    dist[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[: len(dist) - r]
        dist = dist + shifted
    return dist / 2.0 ** len(doubled)


def wilcoxon_signed_rank(a, b, method="auto", exact_max_n=12) -> WilcoxonResult:
    """Two-sided paired signed-rank test; zero differences are dropped.

    ``method="auto"`` enumerates the exact null for ``n <= exact_max_n`` and
    otherwise uses the tie-corrected normal approximation with continuity
    correction.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    d, ranks = _signed_ranks(a, b)
    n = len(d)
    if n == 0:
        return WilcoxonResult(1.0, 0.0, 0, "none", all_zero=True)
    w_plus = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= exact_max_n else "approx"
    if method == "exact":
        dist = exact_null_distribution(ranks)
        k = int(round(2 * w_plus))
        lower, upper = dist[: k + 1].sum(), dist[k:].sum()
        p = min(1.0, 2.0 * min(lower, upper))
    elif method == "approx":
        mu = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts**3 - tie_counts).sum() / 48.0
        if var <= 0:
            return WilcoxonResult(1.0, w_plus, n, method)
        z = max(abs(w_plus - mu) - 0.5, 0.0) / math.sqrt(var)
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(float(p), w_plus, n, method)


def holm_bonferroni(pvals, alpha=0.05) -> list[bool]:
    """Step-down Holm rejections, reported in input order."""
    p = np.asarray(pvals, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    reject = [False] * m
    for rank, idx in enumerate(np.argsort(p, kind="mergesort")):
        if p[idx] <= alpha / (m - rank):
            reject[idx] = True
        else:
            break
    return reject


def bonferroni(pvals, alpha=0.05) -> list[bool]:
    m = len(pvals)
    return [p <= alpha / m for p in pvals]


@dataclass(frozen=True)
class ComparisonResult:
    group_a: str
    group_b: str
    p_raw: float
    reject: bool


def compare_to_baseline(distributions, baseline, baseline_method="multireg_normal",
                        alpha=0.05) -> list[ComparisonResult]:
    """Paired Wilcoxon of every other distribution against one baseline, Holm-adjusted.

    ``baseline_method="same"`` pairs each distribution with the baseline
    group's distribution under the same method.
    """
    by_key = {(d.group, d.method): d for d in distributions}
    pairs = []
    for d in distributions:
        if d.group == baseline:
            continue
        ref_method = d.method if baseline_method == "same" else baseline_method
        ref = by_key.get((baseline, ref_method))
        if ref is None:
            raise ValueError(f"no baseline distribution for {baseline}:{ref_method}")
        p = wilcoxon_signed_rank(d.values, ref.values).p_value
        pairs.append((f"{d.group}:{d.method}", f"{baseline}:{ref_method}", p))
    decisions = holm_bonferroni([p for _, _, p in pairs], alpha) if pairs else []
    return [ComparisonResult(a, b, p, r) for (a, b, p), r in zip(pairs, decisions)]


def write_comparisons(path, comparisons) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group_a", "group_b", "p_raw", "reject_at_0.05_holm"])
        for c in comparisons:
            writer.writerow([c.group_a, c.group_b, repr(c.p_raw), int(c.reject)])


def quartile_table(distributions):
    """Rows of (group, method, median, q25, q75, mean, std) for box plots."""
    rows = []
    for d in distributions:
        s = d.summary
        rows.append((d.group, d.method, s["median"], s["q25"], s["q75"], s["mean"], s["std"]))
    return rows
