"""One test per acceptance criterion, each under its wall-clock limit.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""
import contextlib
import itertools
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, brute_cells
from mink3d.aniso_mf import (anisotropy_map, axis_from_angles, direction_bank_default,
                             fractional_anisotropy)
from mink3d.calibration import PhantomCalibration, hu_to_bmd
from mink3d.cli import main
from mink3d.learn import (TrainConfig, cost_linear, cost_logistic, fit, grad_linear,
                          grad_logistic, normal_equation, predict_linear)
from mink3d.local_mf import local_mf, make_box_kernel
from mink3d.minkowski import MF3D, global_mf, mf_3d, voxel_contributions
from mink3d.phantom import PhantomSpec, generate, generate_cohort
from mink3d.pipeline import PipelineConfig, Specimen, evaluate
from mink3d.local_mf import LocalMFTable
from mink3d.stats_eval import (ImfBlock, SplitPlan, StaticBlock, _signed_ranks, bonferroni,
                               compare_to_baseline, holm_bonferroni, run_protocol,
                               wilcoxon_signed_rank)
from mink3d.volume import BinaryVolume, threshold

pytestmark = pytest.mark.acceptance


@contextlib.contextmanager
def criterion(n, name, limit):
    t0 = time.perf_counter()
    note = {}
    try:
        yield note
    except BaseException:
        ACCEPTANCE[n] = ("FAIL", name, time.perf_counter() - t0, limit, note.get("text", ""))
        raise
    elapsed = time.perf_counter() - t0
    ok = elapsed < limit
    ACCEPTANCE[n] = ("PASS" if ok else "FAIL", name, elapsed, limit, note.get("text", ""))
    assert ok, f"criterion {n} took {elapsed:.1f} s (limit {limit} s)"


def test_c01_global_mf_exactness():
    with criterion(1, "global MF exactness", 1):
        a = np.zeros((3, 3, 3), bool)
        a[1, 1, 1] = True
        assert global_mf(a) == MF3D(1, 6, 3, 1)
        b = np.zeros((4, 3, 3), bool)
        b[1:3, 1, 1] = True
        assert global_mf(b) == MF3D(2, 10, 4, 1)
        torus = np.zeros((7, 7, 3), bool)
        torus[1:6, 1:6, 1] = True
        torus[2:5, 2:5, 1] = False
        assert global_mf(torus).euler == 0
        c = np.zeros((3, 3, 3), bool)
        c[0, 0, 0] = c[2, 2, 2] = True
        assert global_mf(c).euler == 2
        assert all(isinstance(v, int) for v in global_mf(torus))


def test_c02_decomposition_identity():
    with criterion(2, "decomposition identity", 10):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a = rng.random((12, 12, 12)) < rng.uniform(0.05, 0.6)
            total = voxel_contributions(BinaryVolume(a)).reshape(-1, 4).sum(axis=0)
            assert tuple(int(v) for v in total) == tuple(global_mf(a))


def test_c02_oracle_cross_check():
    # the counting code used above agrees with an independent set enumeration
    rng = np.random.default_rng(22)
    for _ in range(5):
        a = rng.random((12, 12, 12)) < rng.uniform(0.05, 0.6)
        assert tuple(global_mf(a)) == tuple(mf_3d(brute_cells(a)))


def test_c03_full_coverage_local_mf():
    with criterion(3, "full-coverage local MF", 10):
        rng = np.random.default_rng(3)
        kernel = make_box_kernel(17)
        for _ in range(20):
            a = rng.random((9, 9, 9)) < rng.uniform(0.05, 0.6)
            table = local_mf(BinaryVolume(a), kernel)
            assert len(table) == a.sum()
            assert np.array_equal(table.values, np.tile(np.array(global_mf(a), float),
                                                        (len(table), 1)))


def test_c04_fa_analytics():
    with criterion(4, "FA analytics", 1):
        assert fractional_anisotropy(2.5, 2.5, 2.5) == 0.0
        assert fractional_anisotropy(1, 0, 0) == pytest.approx(1.0, abs=1e-15)
        assert abs(fractional_anisotropy(2, 1, 1) - 0.40825) < 1e-5
        rng = np.random.default_rng(4)
        for _ in range(1000):
            lam = rng.uniform(0, 10, 3) + 1e-6
            c = rng.uniform(1e-3, 1e3)
            assert abs(fractional_anisotropy(*(c * lam)) - fractional_anisotropy(*lam)) < 1e-9


def _interior(indices, dims, size):
    r = size // 2
    return np.all((indices >= r) & (indices < np.array(dims) - r), axis=1)


def test_c05_orientation_recovery():
    size, dims = 9, (32, 32, 32)
    bank = direction_bank_default()
    with criterion(5, "orientation recovery", 120) as note:
        fractions = []
        for seed in range(10):
            axis = bank.directions[(4 * seed) % len(bank)]
            rods = generate(PhantomSpec("rod_lattice", dims, tuple(axis), 0.2, 3.0, seed))
            blobs = generate(PhantomSpec("isotropic_blobs", dims, fraction=0.2, thickness=3.0,
                                         seed=seed))
            rmap = anisotropy_map(threshold(rods.volume, 400), size, ratio=4, bank=bank)
            bmap = anisotropy_map(threshold(blobs.volume, 400), size, ratio=4, bank=bank)
            inner = _interior(rmap.indices, dims, size)
            v = axis_from_angles(rmap.theta[inner, 0], rmap.phi[inner, 0])
            angle = np.degrees(np.arccos(np.clip(np.abs(v @ axis), 0, 1)))
            fractions.append(np.mean(angle <= 15.0))
            assert np.median(rmap.fa[:, 0]) > np.median(bmap.fa[:, 0]), f"seed {seed}"
        note["text"] = f"min within-15deg fraction {min(fractions):.3f}"
        assert min(fractions) >= 0.8


def test_c06_calibration():
    with criterion(6, "calibration anchors and affinity", 1):
        rng = np.random.default_rng(6)
        cal = PhantomCalibration(-7.25, 243.5)
        assert hu_to_bmd(cal.hu_w, cal) == 0.0
        assert hu_to_bmd(cal.hu_b, cal) == 200.0
        for _ in range(1000):
            c = PhantomCalibration(rng.uniform(-50, 50), rng.uniform(100, 600))
            a, d = rng.uniform(-1000, 2000), rng.uniform(-500, 500)
            expected = d * c.ha_b / (c.hu_b - c.hu_w)
            assert abs(hu_to_bmd(a + d, c) - hu_to_bmd(a, c) - expected) < 1e-9


def _fd(f, theta, h=1e-6):
    return np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in np.eye(len(theta))])


def test_c07_regression_oracles():
    with criterion(7, "regression oracle agreement", 30):
        rng = np.random.default_rng(7)
        done = 0
        while done < 20:
            n = int(rng.integers(1, 6))
            X = rng.normal(size=(100, n)) * rng.uniform(0.5, 3, n) + rng.normal(0, 2, n)
            if np.linalg.cond(np.c_[np.ones(100), X]) >= 100:
                continue
            done += 1
            theta = rng.normal(size=n + 1)
            y_clean = predict_linear(theta, X)
            assert np.max(np.abs(normal_equation(X, y_clean) - theta)) < 1e-10
            y = y_clean + rng.normal(0, 0.3, 100)
            ne = predict_linear(normal_equation(X, y), X)
            gd = fit(X, y, TrainConfig(method="multireg_gd", tol=1e-15, max_iters=200000))
            assert np.sqrt(np.mean((gd.predict(X) - ne) ** 2)) < 1e-4
            # keep |z| far from the log clamp so the cost is smooth at t
            t = rng.normal(0, 0.2, size=n + 1)
            assert np.abs(predict_linear(t, X)).max() < 20
            yb = (rng.random(100) < 0.5).astype(float)
            for cost, grad, target in ((cost_linear, grad_linear, y),
                                       (cost_logistic, grad_logistic, yb)):
                g = grad(t, X, target)
                err = np.linalg.norm(g - _fd(lambda q: cost(q, X, target), t))
                assert err / max(np.linalg.norm(g), 1e-12) < 1e-5


def test_c08_normal_equation_table():
    with criterion(8, "normal equation on the worked table", 1):
        theta = normal_equation([0.0, 1.0, 2.0, 3.0], [4.0, 7.0, 7.0, 8.0])
        assert np.max(np.abs(theta - [4.7, 1.2])) < 1e-9


def _brute_p(a, b):
    d, ranks = _signed_ranks(a, b)
    w = ranks[d > 0].sum()
    stats = np.array([ranks[list(s)].sum() if s else 0.0 for k in range(len(d) + 1)
                      for s in itertools.combinations(range(len(d)), k)])
    lower, upper = np.mean(stats <= w + 1e-9), np.mean(stats >= w - 1e-9)
    return min(1.0, 2 * min(lower, upper))


def test_c09_wilcoxon():
    with criterion(9, "Wilcoxon exact and approximate paths", 30) as note:
        rng = np.random.default_rng(9)
        for n in range(1, 11):
            for _ in range(10):
                a = np.round(rng.normal(size=n), 1)
                b = np.round(rng.normal(size=n), 1)
                if np.all(a == b):
                    continue
                assert abs(wilcoxon_signed_rank(a, b, method="exact").p_value
                           - _brute_p(a, b)) < 1e-12
        worst = 0.0
        for _ in range(200):
            a, b = rng.normal(size=12), rng.normal(size=12)
            ex = wilcoxon_signed_rank(a, b, method="exact").p_value
            ap = wilcoxon_signed_rank(a, b, method="approx").p_value
            worst = max(worst, abs(ex - ap))
        note["text"] = f"max |dp| at n=12: {worst:.4f}"
        assert worst < 0.02


def test_c10_holm():
    with criterion(10, "Holm-Bonferroni", 5):
        assert holm_bonferroni([0.01, 0.04], 0.05) == [True, True]
        assert holm_bonferroni([0.03, 0.04], 0.05) == [False, False]
        rng = np.random.default_rng(10)
        for _ in range(1000):
            p = rng.random(int(rng.integers(1, 15))) ** 3
            holm, bonf = holm_bonferroni(p), bonferroni(p)
            assert all(h or not b for h, b in zip(holm, bonf))


def test_c11_determinism_and_leakage(tmp_path):
    with criterion(11, "protocol determinism and anti-leakage", 60):
        cohort = tmp_path / "cohort"
        assert main(["phantom", "--cohort", "12", "--seed", "11", "--out", str(cohort)]) == 0
        outputs = []
        for run in ("a", "b"):
            assert main(["evaluate", "--manifest", str(cohort / "manifest.csv"), "--groups",
                         "DXA_BMD,IMF.volume,DXA_BMD+AMF.euler.FA/phi", "--kernel-sizes", "5",
                         "--sigma-ratios", "4", "--iterations", "6", "--seed", "3",
                         "--out-dir", str(tmp_path / run)]) == 0
            outputs.append((tmp_path / run / "results.csv").read_bytes())
        assert outputs[0] == outputs[1]

        rng = np.random.default_rng(11)
        n = 15
        tables = [LocalMFTable(np.zeros((20, 3), np.int64), rng.normal(size=(20, 4)))
                  for _ in range(n)]
        static = rng.normal(size=(n, 2))
        y = rng.normal(size=n)
        plan = SplitPlan(n, 5, 10)
        methods = ["multireg", "svr", "multireg_gd"]
        cfgs = {"svr": TrainConfig(method="svr", svr_iters=300),
                "multireg_gd": TrainConfig(method="multireg_gd", max_iters=2000)}

        def records(tbls, stat):
            groups = {"g": [StaticBlock(stat), ImfBlock(tbls, "volume")]}
            return run_protocol(groups, y, methods, plan, cfgs, keep_records=True)[1]

        base = records(tables, static)
        checked = 0
        for victim in range(n):
            t2 = list(tables)
            t2[victim] = LocalMFTable(tables[victim].indices, tables[victim].values * 50 + 100)
            s2 = static.copy()
            s2[victim] *= -40
            for rec, other in zip(base, records(t2, s2)):
                if victim in rec.test:
                    checked += 1
                    assert np.array_equal(other.theta, rec.theta)
                    assert other.block_state[1] == rec.block_state[1]
        # every (iteration, method) record is checked against each of its test specimens
        assert checked == len(base) * (n - plan.n_train)


def test_c12_synthetic_ordering():
    groups = ("DXA_BMD", "IMF.volume", "AMF.volume.FA/phi", "DXA_BMD+AMF.volume.FA/phi")
    with criterion(12, "synthetic replication of the feature ordering", 600) as note:
        cohort = generate_cohort(30, seed=7)
        specimens = [Specimen(f"S{j:03d}", threshold(s.volume, 400), s.fl_kn, s.dxa_bmd)
                     for j, s in enumerate(cohort)]
        config = PipelineConfig(kernel_sizes=(7,), sigma_ratios=(4,), groups=groups,
                                methods=("multireg", "svr"), seed=1, iterations=50)
        dists, _ = evaluate(specimens, config)
        mean = {(d.group, d.method): d.values.mean() for d in dists}
        comps = compare_to_baseline(dists, "DXA_BMD", baseline_method="same")
        decision = {c.group_a: c for c in comps}
        parts = []
        for method in ("multireg_normal", "svr_linear"):
            dxa, imf = mean["DXA_BMD", method], mean["IMF.volume@k7", method]
            amf = mean["AMF.volume.FA/phi@k7r4", method]
            both = mean["DXA_BMD+AMF.volume.FA/phi@k7r4", method]
            c = decision[f"DXA_BMD+AMF.volume.FA/phi@k7r4:{method}"]
            parts.append(f"{method}: DXA {dxa:.3f} DXA+AMF {both:.3f} AMF {amf:.3f} "
                         f"IMF {imf:.3f} p={c.p_raw:.2g}")
            note["text"] = "; ".join(parts)
            assert both < dxa
            assert amf < imf
            assert c.reject
