import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forge.errors import EmptyPool
from forge.fields import gen_b1
from forge.phantom import ParametricMap, ParametricTemplateSet
from forge.randomize import (
    NEUTRAL,
    PARAMS,
    RandomizationBounds,
    RandomizationDraw,
    bounds_from_config,
    pair_template_coils,
    parse_config_text,
    sample_config,
    scale_t2_distribution,
)

REFERENCE_RANGES = {
    "grad_fluct": (-0.05, 0.05),
    "b1_scale": (0.7, 1.2),
    "v_ro": (-10.0, 10.0),
    "v_pe": (-10.0, 10.0),
    "omega": (-50.0, 50.0),
}


def test_default_bounds_match_reference_ranges():
    b = RandomizationBounds()
    for name, rng in REFERENCE_RANGES.items():
        assert getattr(b, name) == rng
    assert b.snr_db == (30.0, math.inf)


def test_draws_inside_bounds():
    b = RandomizationBounds()
    draws = [sample_config(b, 11, i) for i in range(2000)]
    for name in ("v_ro", "v_pe", "omega", "t2_scale"):
        v = np.array([getattr(d, name) for d in draws])
        lo, hi = getattr(b, name)
        assert v.min() >= lo and v.max() <= hi
        # the draw actually spreads over the range
        assert v.min() < lo + 0.05 * (hi - lo) and v.max() > hi - 0.05 * (hi - lo)
    snr = np.array([d.snr_db for d in draws])
    assert snr.min() >= 30.0
    assert 0.05 < np.isinf(snr).mean() < 0.15
    assert all(d.grad_fluct == 0.05 for d in draws)
    for d in draws[:50]:
        m = gen_b1(d.b1_field_spec(), 16, 16)
        assert m.min() >= 0.7 and m.max() <= 1.2
    assert {d.rot for d in draws} == {0, 90, 180, 270}
    assert {d.flip for d in draws} == {"none", "h", "v"}


def test_equal_bounds_give_constant():
    b = RandomizationBounds(v_ro=(3.0, 3.0), snr_db=(40.0, 40.0), t2_scale=(1.1, 1.1))
    for i in range(20):
        d = sample_config(b, 5, i)
        assert (d.v_ro, d.snr_db, d.t2_scale) == (3.0, 40.0, 1.1)


def test_finite_snr_range():
    b = RandomizationBounds(snr_db=(20.0, 25.0))
    s = [sample_config(b, 1, i).snr_db for i in range(200)]
    assert min(s) >= 20 and max(s) <= 25


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(0, 10**9))
def test_draw_deterministic_and_serializable(seed, index):
    b = RandomizationBounds()
    d = sample_config(b, seed, index, 7, 3)
    assert d == sample_config(b, seed, index, 7, 3)
    assert RandomizationDraw.from_dict(d.to_dict()) == d
    assert 0 <= d.template_id < 7 and 0 <= d.coil_set_id < 3


def test_draws_independent_across_parameters():
    # disabling one parameter must not shift any other draw
    b = RandomizationBounds()
    full = sample_config(b, 3, 9)
    part = sample_config(b.disable("v_ro"), 3, 9)
    assert part.v_ro == 0.0
    assert (part.v_pe, part.omega, part.snr_db, part.b1_spec) == (full.v_pe, full.omega, full.snr_db, full.b1_spec)


def test_ablation_gives_neutral_values():
    b = RandomizationBounds().disable(*PARAMS)
    d = sample_config(b, 2, 0)
    for name, v in NEUTRAL.items():
        if name == "b1_scale":
            assert d.b1_spec is None
        else:
            assert getattr(d, name) == v
    assert (d.rot, d.flip) == (0, "none")


def test_bounds_validation():
    with pytest.raises(ValueError):
        RandomizationBounds(v_ro=(1.0, -1.0))
    with pytest.raises(ValueError):
        RandomizationBounds(enabled=frozenset({"nope"}))


# --- pairing -------------------------------------------------------------------


def test_pairing_single_pool_and_empty():
    assert {pair_template_coils([0], ["c"], 4, i) for i in range(50)} == {(0, 0)}
    with pytest.raises(EmptyPool):
        pair_template_coils([], [1], 0, 0)
    assert pair_template_coils(range(5), range(5), 3, 8) == pair_template_coils(range(5), range(5), 3, 8)


def test_pairing_frequencies_within_three_sigma():
    n, k = 100_000, 10
    ids = np.array([pair_template_coils(range(k), range(k), 21, i) for i in range(n)])
    sigma = math.sqrt(n * 0.1 * 0.9)
    for col in range(2):
        counts = np.bincount(ids[:, col], minlength=k)
        assert np.all(np.abs(counts - n / k) < 3 * sigma), counts


# --- T2 scaling ------------------------------------------------------------------


def _t2(values):
    v = np.asarray(values, dtype=float).reshape(1, -1)
    return ParametricTemplateSet(ParametricMap("M0", np.ones_like(v)), ParametricMap("T2", v))


def test_scale_t2_examples():
    t = _t2([100.0, 400.0])
    assert scale_t2_distribution(t, 1.0) is t
    np.testing.assert_array_equal(scale_t2_distribution(t, 2.0).t2.data, [[200.0, 650.0]])
    np.testing.assert_array_equal(scale_t2_distribution(t, 0.5).t2.data, [[50.0, 200.0]])
    d = sample_config(RandomizationBounds(t2_scale=(0.8, 0.8)), 0, 0)
    np.testing.assert_allclose(scale_t2_distribution(t, d).t2.data, [[80.0, 320.0]])


# --- config ------------------------------------------------------------------------


def test_config_parser():
    cfg = parse_config_text(
        """
        # comment
        v_ro = [-5, 5]
        snr_db = [35, inf]   # trailing
        disable = omega, augment
        matrix = 32
        """
    )
    assert cfg["v_ro"] == [-5, 5] and cfg["matrix"] == 32
    assert cfg["snr_db"] == [35, math.inf]
    b = bounds_from_config(cfg)
    assert b.v_ro == (-5.0, 5.0) and b.snr_db == (35.0, math.inf)
    assert "omega" not in b.enabled and "augment" not in b.enabled
    with pytest.raises(ValueError):
        parse_config_text("no equals sign")
