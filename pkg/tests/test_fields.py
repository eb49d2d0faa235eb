import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import polynomial as P

from forge.fields import (
    B1FieldSpec,
    MotionSpec,
    NoiseSpec,
    add_noise,
    b1_delta,
    gen_b1,
    gen_velocity_field,
    gradient_scale_factors,
    noise_sigma,
    normalized_grid,
    perturb_gradient_areas,
    pixel_coords,
    random_b1,
)
from forge.mriops import ComplexImage
from forge.rng import derive_seed, stream, tag_id
from forge.sequence import build_se_moled

# 10 ** (-30 / 20), evaluated with mpmath at 30 digits
SIGMA_30DB = 0.0316227766016838


# --- rng ---------------------------------------------------------------------


def test_stream_is_keyed_and_stateless():
    a = stream(7, 3, "b1").standard_normal(4)
    b = stream(7, 3, "b1").standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, stream(7, 4, "b1").standard_normal(4))
    assert not np.array_equal(a, stream(7, 3, "noise").standard_normal(4))


def test_tag_id_is_stable():
    # blake2b-64 is fixed by the algorithm, not by the Python build
    assert tag_id("noise") == int.from_bytes(hashlib.blake2b(b"noise", digest_size=8).digest(), "little")
    assert 0 <= derive_seed(1, "x") < 2**63


# --- B1 ----------------------------------------------------------------------


def test_b1_zero_spec_is_midpoint():
    np.testing.assert_array_equal(gen_b1(B1FieldSpec.zero(), 16, 16), 0.95)


def test_b1_poly_example():
    c = np.zeros((3, 3))
    c[1, 1] = 1.0
    assert float(b1_delta(B1FieldSpec(c), 0.5, 0.5)) == 0.25


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 4), st.integers(0, 3))
def test_b1_bounds_exact(seed, order, ng):
    spec = B1FieldSpec.random(stream(seed, "t"), order, ng)
    b = gen_b1(spec, 17, 23)
    d = b1_delta(spec, *normalized_grid(17, 23))
    if np.ptp(d) == 0:
        assert np.all(b == 0.95)
    else:
        assert b.min() == 0.7 and b.max() == 1.2
        # affine: ordering preserved
        order_idx = np.argsort(d, axis=None, kind="stable")
        assert np.all(np.diff(b.ravel()[order_idx]) >= 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 4))
def test_b1_polynomial_direct_evaluation(seed, order):
    spec = B1FieldSpec.random(stream(seed, "p"), order, 0)
    x, y = normalized_grid(12, 9)
    np.testing.assert_allclose(b1_delta(spec, x, y), P.polyval2d(x, y, spec.poly_coeffs), rtol=0, atol=1e-12)


def test_b1_spec_roundtrip_and_validation():
    b, spec = random_b1(8, 8, seed=5)
    again = B1FieldSpec.from_dict(spec.to_dict())
    np.testing.assert_array_equal(gen_b1(again, 8, 8), b)
    with pytest.raises(ValueError):
        B1FieldSpec(np.zeros((2, 2)), ((0, 0, 0.0, 1.0),))
    with pytest.raises(ValueError):
        B1FieldSpec(np.zeros((2, 2)), (), (1.2, 0.7))


# --- velocity ----------------------------------------------------------------


def test_velocity_examples():
    v = gen_velocity_field(MotionSpec(3.0, -2.0, 0.0), 8, 8, 22.0)
    assert np.all(v.v_ro_field == 3.0) and np.all(v.v_pe_field == -2.0)
    # odd grid: the center pixel sits at (0, 0)
    m = MotionSpec(1.5, -0.5, 40.0)
    v = gen_velocity_field(m, 9, 9, 22.0)
    assert (v.v_ro_field[4, 4], v.v_pe_field[4, 4]) == (1.5, -0.5)
    x, y = pixel_coords(9, 9, 22.0)
    w = math.radians(40.0)
    m0 = MotionSpec(0, 0, 40.0)
    v0 = gen_velocity_field(m0, 9, 9, 22.0)
    assert x[2, 4] == 0.0
    assert v0.v_ro_field[2, 4] == -w * y[2, 4] and v0.v_pe_field[2, 4] == 0.0


def test_pixel_corner_coordinate():
    x, y = pixel_coords(512, 512, 22.0)
    assert (x[0, 0], y[0, 0]) == (-10.978515625, -10.978515625)


@settings(max_examples=100, deadline=None)
@given(
    st.floats(-10, 10), st.floats(-10, 10), st.floats(-50, 50), st.floats(-3, 3)
)
def test_velocity_linear(vr, vp, om, a):
    m = MotionSpec(vr, vp, om)
    f1 = gen_velocity_field(m.scaled(a), 6, 10, 22.0)
    f0 = gen_velocity_field(m, 6, 10, 22.0)
    np.testing.assert_allclose(f1.v_ro_field, a * f0.v_ro_field, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(f1.v_pe_field, a * f0.v_pe_field, rtol=1e-12, atol=1e-12)


# --- gradient fluctuation ----------------------------------------------------


def test_perturb_zero_is_identity():
    p = build_se_moled(matrix=32, esp_ms=1.86)
    assert perturb_gradient_areas(p, 0.0, 3) is p


def test_perturb_deterministic_and_local():
    p = build_se_moled(matrix=32, esp_ms=1.86)
    a = perturb_gradient_areas(p, 0.05, 11)
    b = perturb_gradient_areas(p, 0.05, 11)
    assert a.events == b.events
    assert len(a.events) == len(p.events)
    for e0, e1 in zip(p.events, a.events):
        assert (e0.kind, e0.t_start_ms, e0.duration_ms, e0.tag) == (e1.kind, e1.t_start_ms, e1.duration_ms, e1.tag)
        if e0.tag != "echo_shift":
            assert e0 == e1
        else:
            assert abs(e1.amplitude / e0.amplitude - 1) <= 0.05


def test_perturb_uniform_statistics():
    p = build_se_moled(matrix=32, esp_ms=1.86)
    f = []
    seed = 0
    while len(f) < 10_000:
        f += list(gradient_scale_factors(p, 0.05, seed).values())
        seed += 1
    f = np.asarray(f)
    assert f.min() >= 0.95 and f.max() <= 1.05
    assert abs(f.mean() - 1.0) < 0.002


# --- noise -------------------------------------------------------------------


def test_noise_infinite_is_identity():
    img = np.ones((4, 4), complex)
    assert add_noise(img, NoiseSpec()) is img


def test_noise_sigma_statistics():
    img = np.zeros((1000, 1000), complex)
    img[0, 0] = 1.0
    assert noise_sigma(1.0, 30.0) == pytest.approx(SIGMA_30DB, rel=1e-14)
    out = add_noise(img, NoiseSpec(30.0, seed=9))
    n = (out - img).ravel()[1:]
    assert abs(n.real.std() / SIGMA_30DB - 1) < 0.05
    assert abs(n.imag.std() / SIGMA_30DB - 1) < 0.05
    # zero mean at 3 sigma
    assert abs(n.real.mean()) < 3 * SIGMA_30DB / math.sqrt(n.size)


def test_noise_deterministic_and_wrapped():
    img = ComplexImage(np.ones((8, 8), complex))
    a = add_noise(img, NoiseSpec(40.0, seed=1))
    b = add_noise(img, NoiseSpec(40.0, seed=1))
    assert isinstance(a, ComplexImage)
    np.testing.assert_array_equal(a.data, b.data)
    with pytest.raises(ValueError):
        add_noise(np.zeros((0, 3)), NoiseSpec(30.0))
