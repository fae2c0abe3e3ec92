import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mink3d.aniso_mf import (DirectionBank, anisotropy_map, axis_from_angles, direction_bank_default,
                             directional_responses, fractional_anisotropy,
                             make_oriented_gaussian, orientation_tensor, principal_angles,
                             read_map, write_map)
from mink3d.local_mf import make_isotropic_gaussian
from mink3d.volume import BinaryVolume

BANK = direction_bank_default()
pos = st.floats(1e-3, 1e3)


def test_bank():
    d = BANK.directions
    assert len(BANK) == 13
    assert any(np.allclose(v, [1, 0, 0]) for v in d)
    assert any(np.allclose(v, np.ones(3) / np.sqrt(3)) for v in d)
    gram = np.abs(d @ d.T)
    assert np.all(gram[~np.eye(13, dtype=bool)] < 1)
    # faces give I, the 6 edge axes 2I, the 4 corner axes 4/3 I
    np.testing.assert_allclose(np.einsum("di,dj->ij", d, d), (1 + 2 + 4 / 3) * np.eye(3),
                               atol=1e-12)


def test_bank_validation():
    with pytest.raises(ValueError):
        DirectionBank([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(ValueError):
        DirectionBank([[1, 0, 0], [0, 1, 0], [0.6, 0.8, 0]])


def test_oriented_kernel_ratio_one_is_isotropic():
    k = make_oriented_gaussian(5, 1.4, 1.0, (0, 0.6, 0.8))
    np.testing.assert_allclose(k.weights, make_isotropic_gaussian(5, 1.4).weights, atol=1e-14)


@given(st.floats(1.0, 8.0), st.floats(0.5, 3.0), st.sampled_from([1, 2]))
def test_oriented_kernel_elongation(ratio, sigma, d):
    k = make_oriented_gaussian(5, sigma, ratio, (1, 0, 0))
    w_along, w_across = k.weights[2 + d, 2, 2], k.weights[2, 2 + d, 2]
    assert w_along == pytest.approx(np.exp(-d**2 / (2 * sigma**2)), rel=1e-12)
    assert w_across == pytest.approx(np.exp(-d**2 * ratio**2 / (2 * sigma**2)), rel=1e-9, abs=1e-300)
    if ratio > 1:
        assert w_along > w_across


def test_oriented_kernel_antipodal():
    d = np.array([1.0, -2.0, 0.5]) / np.linalg.norm([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(make_oriented_gaussian(7, 2.0, 4, d).weights,
                                  make_oriented_gaussian(7, 2.0, 4, -d).weights)
    assert make_oriented_gaussian(7, 2.0, 4, d).weights[3, 3, 3] == 1.0


def test_oriented_kernel_rejects():
    with pytest.raises(ValueError):
        make_oriented_gaussian(5, 1.0, 0.5, (1, 0, 0))
    with pytest.raises(ValueError):
        make_oriented_gaussian(5, 1.0, 2, (1, 1, 0))


def test_single_voxel_responses_equal():
    a = np.zeros((5, 5, 5), bool)
    a[2, 2, 2] = True
    _, r = directional_responses(BinaryVolume(a), BANK, 5)
    np.testing.assert_array_equal(r[0], np.tile([1.0, 6.0, 3.0, 1.0], (13, 1)))
    amap = anisotropy_map(BinaryVolume(a), 5)
    np.testing.assert_allclose(amap.fa, 0.0, atol=1e-9)


def test_rod_response_peaks_along_rod():
    a = np.zeros((15, 7, 7), bool)
    a[:, 3, 3] = True
    idx, r = directional_responses(BinaryVolume(a), BANK, 9, ratio=4)
    centre = np.flatnonzero((idx == [7, 3, 3]).all(axis=1))[0]
    best = np.argmax(r[centre, :, 0])
    np.testing.assert_allclose(BANK.directions[best], [1, 0, 0])


def test_empty_volume_map():
    amap = anisotropy_map(BinaryVolume(np.zeros((4, 4, 4), bool)), 5)
    assert len(amap) == 0


def test_equal_responses_isotropic_tensor():
    evals, _, deg = orientation_tensor(np.full(13, 2.5), BANK)
    np.testing.assert_allclose(evals, evals[0], atol=1e-9)
    assert not deg
    assert fractional_anisotropy(*evals) == pytest.approx(0.0, abs=1e-9)


def test_rank_one_tensor():
    r = np.zeros(13)
    r[[np.allclose(d, [1, 0, 0]) for d in BANK.directions]] = 3.0
    evals, principal, _ = orientation_tensor(r, BANK)
    assert evals[0] == pytest.approx(9.0)
    np.testing.assert_allclose(evals[1:], 0.0, atol=1e-12)
    np.testing.assert_allclose(np.abs(principal), [1, 0, 0], atol=1e-12)


def test_zero_responses_degenerate():
    _, principal, deg = orientation_tensor(np.zeros(13), BANK)
    assert deg and not principal.any()


def test_fa_values():
    assert fractional_anisotropy(3, 3, 3) == 0.0
    assert fractional_anisotropy(1, 0, 0) == pytest.approx(1.0, abs=1e-15)
    assert fractional_anisotropy(2, 1, 1) == pytest.approx(np.sqrt(2) / np.sqrt(12), abs=1e-12)
    with pytest.raises(ValueError):
        fractional_anisotropy(0, 0, 0)


@given(pos, pos, pos, st.floats(1e-3, 1e3))
def test_fa_bounded_and_scale_invariant(a, b, c, s):
    fa = fractional_anisotropy(a, b, c)
    assert 0 <= fa <= 1
    assert fractional_anisotropy(s * a, s * b, s * c) == pytest.approx(fa, abs=1e-9)


def test_angles():
    assert principal_angles([1, 0, 0]) == (0.0, 0.0)
    assert principal_angles([0, 0, 1]) == (0.0, 90.0)
    t, p = principal_angles(np.array([1, 1, 0]) / np.sqrt(2))
    assert t == pytest.approx(45.0) and p == pytest.approx(0.0)


@given(arrays(float, 3, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_angles_antipodal_and_range(v):
    t1, p1 = principal_angles(v)
    t2, p2 = principal_angles(-v)
    assert (t1, p1) == pytest.approx((t2, p2), abs=1e-9)
    assert 0 <= t1 < 180 and 0 <= p1 < 180


@given(arrays(float, 13, elements=st.floats(-50, 50)), st.integers(0, 12))
def test_negating_bank_direction_invariant(r, flip):
    d = BANK.directions.copy()
    d[flip] *= -1
    e1, p1, _ = orientation_tensor(r, BANK)
    e2, p2, _ = orientation_tensor(r, DirectionBank(d))
    np.testing.assert_allclose(e1, e2, atol=1e-9)
    assert np.all(e1 >= -1e-9 * max(1.0, e1[0]))


def test_tensor_psd_on_volume(rng):
    amap = anisotropy_map(BinaryVolume(rng.random((8, 8, 8)) < 0.35), 5)
    assert amap.eigenvalues.min() >= -1e-12 * max(1.0, amap.eigenvalues.max())
    assert np.all((amap.fa >= 0) & (amap.fa <= 1))


def test_map_roundtrip(tmp_path, rng):
    amap = anisotropy_map(BinaryVolume(rng.random((5, 5, 5)) < 0.3), 5, ratio=2)
    write_map(amap, tmp_path / "m.csv")
    back = read_map(tmp_path / "m.csv")
    for name in ("indices", "fa", "theta", "phi", "eigenvalues", "degenerate"):
        np.testing.assert_array_equal(getattr(back, name), getattr(amap, name))


@given(arrays(float, 3, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_axis_from_angles_inverts(v):
    v = v / np.linalg.norm(v)
    back = axis_from_angles(*principal_angles(v))
    assert abs(abs(back @ v) - 1.0) < 1e-9


def test_near_zero_lead_component_is_snapped():
    v = np.array([2.2e-16, -1.0, -1.0]) / np.sqrt(2.0)
    assert principal_angles(v) == (90.0, 45.0)
    np.testing.assert_allclose(axis_from_angles(90.0, 45.0), [0, np.sqrt(0.5), np.sqrt(0.5)],
                               atol=1e-15)
