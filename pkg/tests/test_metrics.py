import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forge.errors import DegenerateInput, DimMismatch, EmptyROI, ZeroReference
from forge.metrics import ghost_roi, metric_gsr, metric_linreg, metric_nrmse, write_metrics_csv


def test_nrmse_examples(rng):
    ref = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    assert metric_nrmse(ref, ref) == 0.0
    assert metric_nrmse(1.01 * ref, ref) == pytest.approx(1.0, rel=1e-12)
    r = np.full((10, 10), 10.0)  # norm 100
    x = r.copy()
    x[3, 4] += 1.0
    assert metric_nrmse(x, r) == pytest.approx(1.0, rel=1e-14)


def test_nrmse_errors():
    with pytest.raises(ZeroReference):
        metric_nrmse(np.ones(3), np.zeros(3))
    with pytest.raises(DimMismatch):
        metric_nrmse(np.ones(3), np.ones(4))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_nrmse_scale_invariant(seed, s):
    rng = np.random.default_rng(seed)
    x, r = rng.random(20), rng.random(20) + 0.1
    assert metric_nrmse(s * x, s * r) == pytest.approx(metric_nrmse(x, r), rel=1e-10)


def _half_ghost():
    img = np.zeros((32, 32))
    img[4:12, 10:20] = 2.0
    img[20:28, 10:20] = 1.0  # copy shifted by FOV/2, half amplitude
    return img


def test_gsr_examples():
    img = _half_ghost()
    roi = (slice(4, 12), slice(10, 20))
    assert metric_gsr(img, roi) == pytest.approx(0.5, rel=1e-15)
    img[20:28] = 0
    assert metric_gsr(img, roi) == 0.0
    assert ghost_roi(roi, img.shape)[20:28, 10:20].all()


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e6))
def test_gsr_scale_invariant(s):
    roi = (slice(4, 12), slice(10, 20))
    assert metric_gsr(s * _half_ghost(), roi) == pytest.approx(0.5, rel=1e-12)


def test_gsr_errors():
    img = np.ones((8, 8))
    with pytest.raises(EmptyROI):
        metric_gsr(img, np.zeros((8, 8), bool))
    with pytest.raises(ValueError):
        metric_gsr(img, (slice(0, 6), slice(None)))  # shifted copy overlaps itself
    with pytest.raises(ZeroReference):
        metric_gsr(np.zeros((8, 8)), (slice(0, 2), slice(0, 2)))
    with pytest.raises(DimMismatch):
        metric_gsr(img, np.ones((4, 4), bool))


def test_linreg_examples(rng):
    x = np.arange(10.0)
    assert metric_linreg(x, x) == pytest.approx((1.0, 0.0, 1.0))
    s, b, r2 = metric_linreg(x, 2 * x + 3)
    assert (s, b, r2) == pytest.approx((2.0, 3.0, 1.0), rel=1e-12)
    x = rng.standard_normal(1000)
    y = rng.standard_normal(1000)
    assert metric_linreg(x, y)[2] < 0.1


def test_linreg_errors_and_range(rng):
    with pytest.raises(DegenerateInput):
        metric_linreg([1, 2], [1, 2])
    with pytest.raises(DegenerateInput):
        metric_linreg([1, 1, 1], [1, 2, 3])
    with pytest.raises(DimMismatch):
        metric_linreg([1, 2, 3], [1, 2])
    assert metric_linreg([1, 2, 3], [5, 5, 5])[2] == 1.0
    for _ in range(20):
        r2 = metric_linreg(rng.random(5), rng.random(5))[2]
        assert 0.0 <= r2 <= 1.0


def test_metrics_csv(tmp_path):
    write_metrics_csv(tmp_path / "m.csv", [{"a": 1, "b": 2}, {"b": 3, "c": 4}])
    rows = list(csv.DictReader((tmp_path / "m.csv").open()))
    assert rows[0] == {"a": "1", "b": "2", "c": ""}
    assert rows[1]["c"] == "4"
