import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import flood_fill_labels
from tactile_strain import strain
from tactile_strain.bspline import SampledSurface, sample_params
from tactile_strain.errors import DegenerateError, InvalidInputError, NoContactError
from tactile_strain.strain import CalibrationModel


def sampled(points, shape):
    K_u, K_v = shape
    return SampledSurface(np.asarray(points, float).reshape(-1, 3), sample_params(K_u, K_v), (K_u, K_v))


def lattice_positions(K_u, K_v, step=1.0):
    rr, cc = np.mgrid[0:K_u, 0:K_v].astype(float)
    return np.stack([cc * step, rr * step], axis=-1)


# --- distances ------------------------------------------------------------


def test_point_distance():
    assert strain.point_distance((0, 0, 0), (3, 4, 0)) == 5.0
    assert strain.point_distance((1.5, -2, 7), (1.5, -2, 7)) == 0.0
    rng = np.random.default_rng(0)
    for a, b in rng.normal(size=(20, 2, 3)):
        ref = math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)
        assert strain.point_distance(a, b) == pytest.approx(ref, rel=1e-14)


def test_total_distance():
    rng = np.random.default_rng(1)
    P = rng.normal(size=(6, 3))
    s = sampled(P, (2, 3))
    assert strain.total_distance(s, s) == 0.0
    a = SampledSurface(np.zeros((2, 3)), np.array([[0.0, 0.0], [1.0, 0.0]]), (2, 1))
    b = SampledSurface(np.tile([3.0, 4.0, 0.0], (2, 1)), a.params, (2, 1))
    assert strain.total_distance(a, b) == 10.0
    Q = rng.normal(size=(6, 3))
    brute = sum(math.dist(p, q) for p, q in zip(P, Q))
    assert strain.total_distance(s, sampled(Q, (2, 3))) == pytest.approx(brute, rel=1e-12)
    with pytest.raises(InvalidInputError):
        strain.total_distance(s, sampled(Q, (3, 2)))


def test_shear_strain_examples():
    s_ref = sampled(np.zeros((100, 3)), (10, 10))
    assert strain.shear_strain(s_ref, s_ref).gamma_ss == 0.0
    s = sampled(np.tile([1.0, 0, 0], (100, 1)), (10, 10))
    rep = strain.shear_strain(s, s_ref, 1 / 18000)
    assert rep.gamma_ss == pytest.approx(100 / 18000)
    assert rep.gamma_ss == pytest.approx(0.005556, abs=1e-6)
    assert rep.to_dict()["K"] == 100
    with pytest.raises(InvalidInputError):
        strain.shear_strain(s, s_ref, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 10))
def test_shear_strain_symmetry_translation_scaling(seed, tx, ty, k):
    rng = np.random.default_rng(seed)
    ref = rng.normal(size=(12, 3)) * 20
    offset = rng.normal(size=(12, 3))
    s_ref, s = sampled(ref, (3, 4)), sampled(ref + offset, (3, 4))
    g = strain.shear_strain(s, s_ref).gamma_ss
    assert strain.shear_strain(s_ref, s).gamma_ss == g
    t = np.array([tx, ty, 0.0])
    moved = strain.shear_strain(sampled(ref + offset + t, (3, 4)), sampled(ref + t, (3, 4))).gamma_ss
    assert moved == pytest.approx(g, rel=1e-9)
    uniform = np.tile(rng.normal(size=3), (12, 1))
    g1 = strain.shear_strain(sampled(ref + uniform, (3, 4)), s_ref).gamma_ss
    gk = strain.shear_strain(sampled(ref + k * uniform, (3, 4)), s_ref).gamma_ss
    assert gk == pytest.approx(k * g1, rel=1e-9)


# --- force ----------------------------------------------------------------


def test_force_examples():
    f = strain.force_from_strain(1.0)
    assert f.force == pytest.approx(1.95) and f.in_range
    f = strain.force_from_strain(0.0)
    assert f.force == pytest.approx(-1.14) and not f.in_range
    f = strain.force_from_strain((8 + 1.14) / 3.09)
    assert f.force == pytest.approx(8.0) and f.in_range
    assert not strain.force_from_strain(3.0).in_range
    with pytest.raises(InvalidInputError):
        strain.force_from_strain(-0.1)


@given(st.floats(0, 100), st.floats(0, 100))
def test_force_increasing(a, b):
    assume(b - a > 1e-9)
    assert strain.force_from_strain(a).force < strain.force_from_strain(b).force


def test_fit_exact_and_two_points():
    g = np.linspace(0.5, 3.0, 8)
    m = strain.fit_calibration(np.column_stack([g, 3.09 * g - 1.14]))
    assert m.slope == pytest.approx(3.09) and m.intercept == pytest.approx(-1.14)
    assert m.residual_rms == pytest.approx(0.0, abs=1e-12)
    two = strain.fit_calibration([(1.0, 2.0), (2.0, 5.0)])
    assert two.slope == pytest.approx(3.0) and two.intercept == pytest.approx(-1.0)
    with pytest.raises(DegenerateError):
        strain.fit_calibration([(1.0, 2.0), (1.0, 3.0)])


def test_fit_noisy_within_three_standard_errors():
    rng = np.random.default_rng(2)
    for _ in range(20):
        g = rng.uniform(0.5, 3.0, 40)
        f = 3.09 * g - 1.14 + rng.normal(0, 0.2, g.size)
        m = strain.fit_calibration(np.column_stack([g, f]))
        assert abs(m.slope - 3.09) <= 3 * m.slope_stderr
        assert abs(m.intercept + 1.14) <= 3 * m.intercept_stderr


def test_calibration_dict_roundtrip():
    m = CalibrationModel(2.0, 0.5, (0.0, 3.0), 0.1, 0.01, 0.02)
    assert CalibrationModel.from_dict(m.to_dict()) == m
    with pytest.raises(InvalidInputError):
        CalibrationModel(slope=-1.0)


# --- displacement field ---------------------------------------------------


def test_displacement_map():
    ref = np.zeros((12, 3))
    s_ref = sampled(ref, (3, 4))
    assert not strain.displacement_map(s_ref, s_ref).any()
    moved = ref.copy()
    moved[5] = (0, 2, 0)
    F = strain.displacement_map(sampled(moved, (3, 4)), s_ref)
    assert F.shape == (3, 4) and np.count_nonzero(F) == 1 and F[1, 1] == 2.0
    rng = np.random.default_rng(3)
    s = sampled(rng.normal(size=(12, 3)), (3, 4))
    assert strain.displacement_map(s, s_ref).sum() == pytest.approx(strain.total_distance(s, s_ref))


# --- segmentation ---------------------------------------------------------


def test_segment_zero_and_single_blob():
    assert not strain.segment_contact(np.zeros((8, 8)), 0.5).contact
    F = np.zeros((12, 12))
    F[4:7, 4:7] = 3.0
    seg = strain.segment_contact(F, 1.0)
    expected = np.zeros_like(F, bool)
    expected[3:8, 3:8] = True  # blob grown by the 3x3 dilation
    assert seg.contact
    np.testing.assert_array_equal(seg.mask, expected)


def test_segment_two_blobs_keeps_larger():
    F = np.zeros((20, 20))
    F[1:4, 1:5] = 2.0  # 12 cells
    F[10:15, 10:16] = 2.0  # 30 cells
    seg = strain.segment_contact(F, 1.0)
    labels, _ = flood_fill_labels(strain.dilate(F > 1.0, 3, 1))
    big = labels == labels[12, 12]
    np.testing.assert_array_equal(seg.mask, big)
    assert not seg.mask[2, 2]


# --- localization ---------------------------------------------------------


def test_localize_single_cell():
    F = np.zeros((9, 9))
    F[3, 6] = 4.0
    pos = lattice_positions(9, 9, step=5.0)
    c = strain.localize_contact(F, pos, 1.0)
    assert c.center == pytest.approx((30.0, 15.0))
    assert c.confidence == pytest.approx(1.0)
    with pytest.raises(NoContactError):
        strain.localize_contact(np.zeros((5, 5)), lattice_positions(5, 5))


def test_localize_two_lobes():
    F = np.zeros((21, 21))
    F[10, 6:9] = 3.0
    F[10, 12:15] = 3.0
    F[10, 9:12] = 1.5  # bridge keeps one region
    c = strain.localize_contact(F, lattice_positions(21, 21), 0.5)
    assert c.center == pytest.approx((10.0, 10.0))


def test_localize_with_callable_mapping():
    F = np.zeros((9, 9))
    F[2, 5] = 1.0
    c = strain.localize_contact(F, lambda r, c: (2.0 * c + 1, 3.0 * r), 0.5, bounds=(100, 100))
    assert c.center == pytest.approx((11.0, 6.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_localize_point_symmetric_fields(seed):
    rng = np.random.default_rng(seed)
    G = rng.random((15, 15)) ** 4 * 5
    F = G + G[::-1, ::-1]
    seg = strain.segment_contact(F, 0.5)
    assume(seg.contact and np.array_equal(seg.mask, seg.mask[::-1, ::-1]))
    c = strain.localize_contact(F, lattice_positions(15, 15), 0.5)
    assert c.center == pytest.approx((7.0, 7.0), abs=1e-9)


# --- edge orientation -----------------------------------------------------


def test_principal_angle_examples():
    t = np.linspace(-5, 5, 11)
    assert strain.principal_angle(np.column_stack([t, t])).angle == pytest.approx(45.0)
    assert strain.principal_angle(np.column_stack([t, 0 * t])).angle == pytest.approx(0.0)
    iso = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)], float)
    assert strain.principal_angle(iso).degenerate
    with pytest.raises(InvalidInputError):
        strain.principal_angle(np.zeros((1, 2)))


def test_edge_pca_on_lattice_line():
    K = 41
    pos = lattice_positions(K, K)
    F = np.zeros((K, K))
    for k in range(K):
        F[k, k] = 1.0 + 0.01 * k  # diagonal band: x = y
    assert strain.edge_orientation_pca(F, pos, 0.01).angle == pytest.approx(45.0)
    F = np.zeros((K, K))
    F[20, :] = 1.0
    assert strain.edge_orientation_pca(F, pos, 0.02).angle == pytest.approx(0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 360), st.floats(0.1, 10))
def test_principal_angle_rotation_order_scaling(seed, theta, k):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(30, 2)) * [5.0, 1.0]
    base = strain.principal_angle(P)
    assume(base.eigenvalue_ratio > 1.5)
    assert strain.principal_angle(rng.permutation(P)).angle == pytest.approx(base.angle, abs=1e-9)
    assert strain.principal_angle(k * P).angle == pytest.approx(base.angle, abs=1e-9)
    a = math.radians(theta)
    R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    rotated = strain.principal_angle(P @ R.T).angle
    diff = (rotated - base.angle - theta) % 180.0
    assert min(diff, 180.0 - diff) <= 1e-6


def test_edge_pca_scale_invariant():
    rng = np.random.default_rng(4)
    F = rng.random((20, 20))
    pos = lattice_positions(20, 20, 3.0)
    a = strain.edge_orientation_pca(F, pos).angle
    assert strain.edge_orientation_pca(F, 2.5 * pos).angle == pytest.approx(a, abs=1e-9)


def test_edge_pca_errors():
    with pytest.raises(InvalidInputError):
        strain.edge_orientation_pca(np.ones((5, 5)), lattice_positions(5, 5), 0.0)


# --- serialization --------------------------------------------------------


def test_field_outputs(tmp_path):
    F = np.array([[0.0, 1.0], [2.0, 4.0]])
    strain.field_to_csv(F, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines == ["a,b,distance", "0,0,0.0", "0,1,1.0", "1,0,2.0", "1,1,4.0"]
    rgb = strain.field_to_rgb(F)
    assert rgb.shape == (2, 2, 3) and rgb.dtype == np.uint8
    assert tuple(rgb[0, 0]) == (0, 0, 0) and tuple(rgb[1, 1]) == (255, 255, 255)
