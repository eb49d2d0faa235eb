import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from forge.errors import AllZeroImage, DimMismatch, NonSquareGrid
from forge.phantom import (
    T2_MAX_MS,
    ParametricMap,
    ParametricTemplateSet,
    WeightedImage,
    augment,
    builtin_template_pool,
    forward_signal,
    invert_t2,
    pd_to_m0,
    resample_bilinear,
    synthesize_templates,
    synthetic_head,
)

# bisection on the saturation-recovery model (mpmath, 30 digits) for
# M0=1, TR=6000, T1=2000, TE=100, S=0.475106
T2_BISECTION_MS = 144.269300022168


def test_pd_to_m0_max_maps_to_one():
    data = np.array([[1.0, 7.3], [2.0, 0.0]])
    m0 = pd_to_m0(WeightedImage(data, 1e-3, 1e6))
    assert m0.data[0, 1] == 1.0
    assert m0.data.min() >= 0 and m0.data.max() <= 1


def test_pd_to_m0_constant_and_grid():
    assert np.all(pd_to_m0(WeightedImage(np.full((3, 3), 4.2), 1, 1)).data == 1.0)
    m0 = pd_to_m0(WeightedImage(np.array([[1.0, 2.0], [3.0, 4.0]]), 1, 1))
    np.testing.assert_array_equal(m0.data, [[0.25, 0.5], [0.75, 1.0]])


def test_pd_to_m0_all_zero():
    with pytest.raises(AllZeroImage):
        pd_to_m0(WeightedImage(np.zeros((2, 2)), 1, 1))


def test_invert_t2_ln_cancels():
    m0 = ParametricMap("M0", np.full((2, 2), 0.8))
    s = WeightedImage(np.full((2, 2), 0.8 * np.exp(-1.0)), te_ms=60.0, tr_ms=1e9)
    np.testing.assert_allclose(invert_t2(s, m0).data, 60.0, rtol=1e-12)


def test_invert_t2_bisection_oracle():
    m0 = ParametricMap("M0", np.ones((1, 1)))
    s = WeightedImage(np.array([[0.475106]]), te_ms=100.0, tr_ms=6000.0)
    assert invert_t2(s, m0, t1_ms=2000.0).data[0, 0] == pytest.approx(T2_BISECTION_MS, abs=1e-6)


def test_invert_t2_degenerate_pixels():
    m0 = ParametricMap("M0", np.array([[1.0, 0.0, 1.0]]))
    s = WeightedImage(np.array([[1.0, 0.3, 0.0]]), te_ms=50.0, tr_ms=6000.0)
    np.testing.assert_array_equal(invert_t2(s, m0).data, [[T2_MAX_MS, T2_MAX_MS, 0.0]])


def test_invert_t2_dims():
    with pytest.raises(DimMismatch):
        invert_t2(WeightedImage(np.ones((2, 3)), 1, 1), ParametricMap("M0", np.ones((3, 2))))


@settings(max_examples=200, deadline=None)
@given(
    t2=st.floats(1.0001, 649.999),
    m0=st.floats(1e-3, 1.0),
    te=st.floats(5.0, 200.0),
    tr=st.floats(500.0, 10000.0),
)
def test_invert_forward_roundtrip(t2, m0, te, tr):
    s = forward_signal(m0, t2, te, tr)
    out = invert_t2(WeightedImage(np.array([[s]]), te, tr), ParametricMap("M0", np.array([[m0]])))
    assert out.data[0, 0] == pytest.approx(t2, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 5), elements=st.floats(0, 1e4)), arrays(np.float64, (6, 5), elements=st.floats(0, 1e4)))
def test_template_bounds(pd, t2w):
    if pd.max() == 0:
        pd[0, 0] = 1.0
    t = synthesize_templates(WeightedImage(pd, 1e-3, 1e6), WeightedImage(t2w, 80.0, 5000.0))
    assert t.m0.data.min() >= 0 and t.m0.data.max() <= 1
    assert t.t2.data.min() >= 0 and t.t2.data.max() <= T2_MAX_MS


def test_resample_identity_and_constant():
    m = ParametricMap("T2", np.arange(12.0).reshape(3, 4))
    np.testing.assert_array_equal(resample_bilinear(m, 3, 4).data, m.data)
    c = resample_bilinear(ParametricMap("M0", np.full((3, 3), 0.4)), 7, 11)
    np.testing.assert_allclose(c.data, 0.4, rtol=0, atol=1e-15)


def test_resample_ramp_midpoints():
    # hand-evaluated: output centers at source coords -0.25, 0.25, 0.75, 1.25 (edges clamped)
    m = ParametricMap("M0", np.array([[0.0, 1.0], [0.0, 1.0]]))
    out = resample_bilinear(m, 2, 4).data
    np.testing.assert_allclose(out[0], [0.0, 0.25, 0.75, 1.0], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 4), elements=st.floats(-100, 100)), st.integers(2, 17), st.integers(2, 17))
def test_resample_respects_bounds(data, rows, cols):
    out = resample_bilinear(ParametricMap("T1", data), rows, cols).data
    assert out.min() >= data.min() and out.max() <= data.max()


def _tset(rng, shape=(6, 6)):
    return ParametricTemplateSet(ParametricMap("M0", rng.random(shape)), ParametricMap("T2", 600 * rng.random(shape)))


def test_augment_identity_and_group(rng):
    t = _tset(rng)
    assert augment(t, 0, "none") is t
    twice = augment(augment(t, 90), 90)
    np.testing.assert_array_equal(twice.t2.data, augment(t, 180).t2.data)
    np.testing.assert_array_equal(augment(augment(t, 0, "h"), 0, "h").m0.data, t.m0.data)


def test_augment_same_transform_on_all_maps(rng):
    t = _tset(rng)
    a = augment(t, 270, "v")
    np.testing.assert_array_equal(a.m0.data, np.rot90(t.m0.data, 3)[::-1])
    np.testing.assert_array_equal(a.t2.data, np.rot90(t.t2.data, 3)[::-1])
    assert "rot270" in a.provenance


@pytest.mark.parametrize("rot", [0, 90, 180, 270])
@pytest.mark.parametrize("flip", ["none", "h", "v"])
def test_augment_preserves_histogram(rng, rot, flip):
    t = _tset(rng)
    a = augment(t, rot, flip)
    np.testing.assert_array_equal(np.sort(a.t2.data, axis=None), np.sort(t.t2.data, axis=None))


def test_augment_nonsquare(rng):
    t = _tset(rng, (4, 6))
    with pytest.raises(NonSquareGrid):
        augment(t, 90)
    assert augment(t, 180, "h").shape == (4, 6)


def test_builtin_head_is_deterministic_and_bounded():
    pd1, t2w1 = synthetic_head(64, seed=3)
    pd2, _ = synthetic_head(64, seed=3)
    np.testing.assert_array_equal(pd1.data, pd2.data)
    pool = builtin_template_pool(2, 64, 96, seed=1)
    assert [p.shape for p in pool] == [(96, 96), (96, 96)]
    for p in pool:
        assert 0 <= p.t2.data.min() and p.t2.data.max() <= T2_MAX_MS
        assert p.m0.data.max() <= 1
