import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mink3d.learn import TrainConfig
from mink3d.local_mf import LocalMFTable
from mink3d.stats_eval import (ImfBlock, RMSEDistribution, SplitPlan, StaticBlock, bonferroni,
                               compare_to_baseline, holm_bonferroni, pearson_r, quartile_table,
                               read_results, rmse, run_protocol, wilcoxon_signed_rank,
                               write_results, _signed_ranks)


def brute_wilcoxon_p(a, b):
    d, ranks = _signed_ranks(a, b)
    n = len(d)
    w = ranks[d > 0].sum()
    stats = [sum(r for r, s in zip(ranks, signs) if s) for signs in
             itertools.product((0, 1), repeat=n)]
    lower = sum(s <= w + 1e-9 for s in stats) / 2**n
    upper = sum(s >= w - 1e-9 for s in stats) / 2**n
    return min(1.0, 2 * min(lower, upper))


def test_rmse():
    assert rmse([1, 2], [1, 2]) == 0
    assert rmse([2, 3, 4], [1, 2, 3]) == 1
    assert rmse([3, 5], [1, 1]) == pytest.approx(math.sqrt(10))


def test_pearson():
    a = np.array([1.0, 2.0, 3.0, 5.0])
    assert pearson_r(a, 2 * a + 3) == pytest.approx(1.0)
    assert pearson_r(a, -a) == pytest.approx(-1.0)
    assert pearson_r([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-5)
    with pytest.raises(ValueError):
        pearson_r([1, 1, 1], [1, 2, 3])


@given(arrays(float, 5, elements=st.floats(-100, 100)), arrays(float, 5, elements=st.floats(-100, 100)))
def test_rmse_nonnegative(p, t):
    r = rmse(p, t)
    assert r >= 0 and (r == 0) == bool(np.all(p == t))


def test_split_plan():
    plan = SplitPlan(30, seed=4, iterations=50)
    assert plan.n_train == 24
    splits = plan.splits()
    assert len(splits) == 50
    for train, test in splits:
        assert len(train) == 24 and len(test) == 6
        assert sorted(np.concatenate([train, test]).tolist()) == list(range(30))
    again = SplitPlan(30, seed=4, iterations=50).splits()
    assert all(np.array_equal(a[0], b[0]) for a, b in zip(splits, again))
    assert not np.array_equal(splits[0][0], SplitPlan(30, seed=5).split(0)[0])


def test_constant_group_zero_rmse():
    plan = SplitPlan(10, seed=0, iterations=5)
    dists, _ = run_protocol({"c": np.ones((10, 1))}, np.full(10, 2.0), ["multireg"], plan)
    np.testing.assert_allclose(dists[0].values, 0.0, atol=1e-12)


def test_exact_linear_recovery(rng):
    X = rng.normal(size=(20, 3))
    y = 1.0 + X @ [2.0, -1.0, 0.5]
    dists, _ = run_protocol({"g": X}, y, ["multireg"], SplitPlan(20, 1, 10))
    assert dists[0].values.max() < 1e-6


def test_groups_share_splits(rng):
    X = rng.normal(size=(15, 2))
    y = rng.normal(size=15)
    _, records = run_protocol({"a": X[:, :1], "b": X}, y, ["multireg"], SplitPlan(15, 2, 6),
                              keep_records=True)
    by = {(r.group, r.iteration): r for r in records}
    for t in range(6):
        np.testing.assert_array_equal(by["a", t].train, by["b", t].train)
        np.testing.assert_array_equal(by["a", t].test, by["b", t].test)


def test_protocol_deterministic(rng):
    X = rng.normal(size=(12, 2))
    y = rng.normal(size=12)
    cfg = {"svr": TrainConfig(method="svr", svr_iters=200)}
    run = lambda: run_protocol({"g": X}, y, ["svr", "multireg"], SplitPlan(12, 9, 5), cfg)[0]
    for a, b in zip(run(), run()):
        assert a.values.tobytes() == b.values.tobytes()


def test_no_leakage_from_test_specimens(rng):
    n = 12
    tables = [LocalMFTable(np.zeros((8, 3), np.int64), rng.normal(size=(8, 4))) for _ in range(n)]
    static = rng.normal(size=(n, 1))
    y = rng.normal(size=n)
    plan = SplitPlan(n, 3, 4)
    base = run_protocol({"g": [StaticBlock(static), ImfBlock(tables, "volume")]}, y,
                        ["multireg"], plan, keep_records=True)[1]
    for rec in base:
        victim = rec.test[0]
        tables2 = list(tables)
        tables2[victim] = LocalMFTable(tables[victim].indices, tables[victim].values * 100 + 50)
        static2 = static.copy()
        static2[victim] += 1e3
        other = run_protocol({"g": [StaticBlock(static2), ImfBlock(tables2, "volume")]}, y,
                             ["multireg"], plan, keep_records=True)[1]
        rec2 = other[rec.iteration]
        np.testing.assert_array_equal(rec2.theta, rec.theta)
        assert rec2.block_state[1] == rec.block_state[1]
    # control: the same perturbation applied to a training specimen does change the fit
    rec = base[0]
    static3 = static.copy()
    static3[rec.train[0]] += 1e3
    moved = run_protocol({"g": [StaticBlock(static3), ImfBlock(tables, "volume")]}, y,
                         ["multireg"], plan, keep_records=True)[1][0]
    assert not np.array_equal(moved.theta, rec.theta)


def test_wilcoxon_identical():
    r = wilcoxon_signed_rank([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.p_value == 1.0 and r.all_zero


def test_wilcoxon_hand_example():
    b = np.zeros(5)
    a = np.array([1.0, 2.0, 3.0, 4.0, -5.0])
    r = wilcoxon_signed_rank(a, b, method="exact")
    # W- = 5; P(W <= 5) under the null counts 10 of 32 sign patterns
    count = sum(sum(k for k, s in zip(range(1, 6), signs) if s) <= 5
                for signs in itertools.product((0, 1), repeat=5))
    assert count == 10
    assert r.p_value == pytest.approx(2 * count / 32)


def test_wilcoxon_exact_matches_brute_force(rng):
    for n in range(1, 11):
        for _ in range(5):
            a = np.round(rng.normal(size=n), 1)
            b = np.round(rng.normal(size=n), 1)
            if np.all(a == b):
                continue
            assert wilcoxon_signed_rank(a, b, method="exact").p_value == pytest.approx(
                brute_wilcoxon_p(a, b), abs=1e-12)


def test_wilcoxon_all_one_sided():
    a = np.arange(1.0, 51.0)
    r = wilcoxon_signed_rank(a + 0.5, a)
    mu = 50 * 51 / 4
    ranks_tied_var = 50 * 51 * 101 / 24 - (50**3 - 50) / 48
    z = (abs(r.statistic - mu) - 0.5) / math.sqrt(ranks_tied_var)
    assert r.method == "approx"
    assert r.p_value == pytest.approx(math.erfc(z / math.sqrt(2)), rel=1e-12)
    assert r.p_value < 1e-8
    prefix = wilcoxon_signed_rank(a[:10] + 0.5, a[:10], method="exact")
    assert prefix.p_value == pytest.approx(2 / 2**10)


def test_wilcoxon_approx_close_to_exact(rng):
    worst = 0.0
    for _ in range(50):
        a, b = rng.normal(size=12), rng.normal(size=12)
        ex = wilcoxon_signed_rank(a, b, method="exact").p_value
        ap = wilcoxon_signed_rank(a, b, method="approx").p_value
        worst = max(worst, abs(ex - ap))
    assert worst < 0.02


def test_holm_cases():
    assert holm_bonferroni([0.04]) == [True]
    assert holm_bonferroni([0.01, 0.04]) == [True, True]
    assert holm_bonferroni([0.03, 0.04]) == [False, False]
    assert holm_bonferroni([0.04, 0.01]) == [True, True]
    assert holm_bonferroni([0.001, 0.5, 0.02]) == [True, False, True]
    assert holm_bonferroni([0.001, 0.5, 0.03]) == [True, False, False]


@given(arrays(float, st.integers(1, 12), elements=st.floats(0, 1)), st.floats(0.001, 0.2))
def test_holm_superset_of_bonferroni(p, alpha):
    holm, bonf = holm_bonferroni(p, alpha), bonferroni(p, alpha)
    assert all(h or not b for h, b in zip(holm, bonf))


def test_compare_to_baseline(rng):
    base = RMSEDistribution("DXA_BMD", "multireg_normal", rng.normal(1.0, 0.1, 20))
    better = RMSEDistribution("AMF", "multireg_normal", base.values - 0.3)
    same = RMSEDistribution("IMF", "multireg_normal", base.values + rng.normal(0, 1e-3, 20))
    comps = compare_to_baseline([base, better, same], "DXA_BMD")
    assert [c.group_a for c in comps] == ["AMF:multireg_normal", "IMF:multireg_normal"]
    assert comps[0].reject and not comps[1].reject
    with pytest.raises(ValueError):
        compare_to_baseline([better], "DXA_BMD")


def test_results_roundtrip_and_quartiles(tmp_path, rng):
    dists = [RMSEDistribution("g", m, rng.random(50)) for m in ("multireg_normal", "svr_linear")]
    write_results(tmp_path / "r.csv", dists)
    back = read_results(tmp_path / "r.csv")
    for a, b in zip(dists, back):
        np.testing.assert_array_equal(a.values, b.values)
    row = quartile_table(back)[0]
    q25, med, q75 = np.percentile(dists[0].values, [25, 50, 75])
    assert row[2:5] == (med, q25, q75)
