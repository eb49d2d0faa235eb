"""Bounded domain randomization of templates and non-ideal factors.

Each parameter is drawn from its own stateless stream keyed by
(master seed, sample index, parameter tag), so any draw can be recomputed in
isolation and in any order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EmptyPool
from .fields import B1FieldSpec
from .phantom import FLIPS, ROTATIONS, T2_MAX_MS, ParametricMap, ParametricTemplateSet
from .rng import derive_seed, stream

PARAMS = ("snr_db", "grad_fluct", "b1_scale", "v_ro", "v_pe", "omega", "t2_scale", "augment")

NEUTRAL = {
    "snr_db": math.inf,
    "grad_fluct": 0.0,
    "b1_scale": 1.0,
    "v_ro": 0.0,
    "v_pe": 0.0,
    "omega": 0.0,
    "t2_scale": 1.0,
}


@dataclass(frozen=True)
class RandomizationBounds:
    snr_db: tuple[float, float] = (30.0, math.inf)
    grad_fluct: tuple[float, float] = (-0.05, 0.05)
    b1_scale: tuple[float, float] = (0.7, 1.2)
    v_ro: tuple[float, float] = (-10.0, 10.0)
    v_pe: tuple[float, float] = (-10.0, 10.0)
    omega: tuple[float, float] = (-50.0, 50.0)
    t2_scale: tuple[float, float] = (0.7, 1.3)
    # probability of the noiseless (infinite SNR) outcome when snr_db[1] is inf
    p_noiseless: float = 0.1
    # upper end of the finite SNR draw when snr_db[1] is inf
    snr_finite_max: float = 60.0
    poly_order: int = 2
    num_gaussians: int = 1
    enabled: frozenset = frozenset(PARAMS)

    def __post_init__(self):
        for name in ("snr_db", "grad_fluct", "b1_scale", "v_ro", "v_pe", "omega", "t2_scale"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not 0.0 <= self.p_noiseless <= 1.0:
            raise ValueError("p_noiseless must be a probability")
        unknown = set(self.enabled) - set(PARAMS)
        if unknown:
            raise ValueError(f"unknown parameters {sorted(unknown)}")
        object.__setattr__(self, "enabled", frozenset(self.enabled))

    def disable(self, *names: str) -> "RandomizationBounds":
        return replace(self, enabled=self.enabled - set(names))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["enabled"] = sorted(self.enabled)
        return _jsonable(d)


@dataclass(frozen=True)
class RandomizationDraw:
    seed: int
    index: int
    snr_db: float
    noise_seed: int
    grad_fluct: float
    grad_seed: int
    b1_spec: dict | None  # None means a uniform B1 of 1.0
    v_ro: float
    v_pe: float
    omega: float
    t2_scale: float
    rot: int = 0
    flip: str = "none"
    template_id: int = 0
    coil_set_id: int = 0

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "RandomizationDraw":
        d = dict(d)
        d["snr_db"] = _from_json_float(d["snr_db"])
        return cls(**d)

    def b1_field_spec(self) -> B1FieldSpec | None:
        return None if self.b1_spec is None else B1FieldSpec.from_dict(self.b1_spec)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _from_json_float(v) -> float:
    return float(v) if not isinstance(v, str) else float(v.replace("Infinity", "inf"))


def _uniform(seed, index, tag, lo, hi) -> float:
    if lo == hi:
        return lo
    return float(stream(seed, index, tag).uniform(lo, hi))


def sample_config(
    bounds: RandomizationBounds,
    seed: int,
    index: int,
    n_templates: int = 1,
    n_coils: int = 1,
) -> RandomizationDraw:
    on = bounds.enabled

    snr = NEUTRAL["snr_db"]
    if "snr_db" in on:
        lo, hi = bounds.snr_db
        if lo == hi:
            snr = lo
        elif math.isinf(hi):
            rng = stream(seed, index, "snr_db")
            noiseless = rng.uniform() < bounds.p_noiseless
            snr = math.inf if noiseless else float(rng.uniform(lo, max(lo, bounds.snr_finite_max)))
        else:
            snr = _uniform(seed, index, "snr_db", lo, hi)

    grad = 0.0
    if "grad_fluct" in on:
        grad = max(abs(bounds.grad_fluct[0]), abs(bounds.grad_fluct[1]))

    b1_spec = None
    if "b1_scale" in on:
        spec = B1FieldSpec.random(stream(seed, index, "b1"), bounds.poly_order, bounds.num_gaussians, bounds.b1_scale)
        b1_spec = spec.to_dict()

    vals = {}
    for name in ("v_ro", "v_pe", "omega", "t2_scale"):
        lo, hi = getattr(bounds, name)
        vals[name] = _uniform(seed, index, name, lo, hi) if name in on else NEUTRAL[name]

    rot, flip = 0, "none"
    if "augment" in on:
        rng = stream(seed, index, "augment")
        rot = int(ROTATIONS[rng.integers(len(ROTATIONS))])
        flip = FLIPS[rng.integers(len(FLIPS))]

    t_id, c_id = pair_template_coils(range(n_templates), range(n_coils), seed, index)
    return RandomizationDraw(
        seed=int(seed),
        index=int(index),
        snr_db=snr,
        noise_seed=derive_seed(seed, index, "noise"),
        grad_fluct=grad,
        grad_seed=derive_seed(seed, index, "grad_fluct"),
        b1_spec=b1_spec,
        rot=rot,
        flip=flip,
        template_id=t_id,
        coil_set_id=c_id,
        **vals,
    )


def pair_template_coils(templates_pool, coils_pool, seed: int, index: int) -> tuple[int, int]:
    """Independent uniform picks (as pool indices) from each pool."""
    nt, nc = len(templates_pool), len(coils_pool)
    if nt == 0 or nc == 0:
        raise EmptyPool("template and coil pools must be non-empty")
    t = int(stream(seed, index, "pair_template").integers(nt))
    c = int(stream(seed, index, "pair_coils").integers(nc))
    return t, c


def scale_t2_distribution(template: ParametricTemplateSet, scale) -> ParametricTemplateSet:
    """Multiply T2 by ``scale`` (a float or a draw) and clamp to the template range."""
    s = scale.t2_scale if isinstance(scale, RandomizationDraw) else float(scale)
    if s == 1.0:
        return template
    t2 = np.clip(template.t2.data * s, 0.0, T2_MAX_MS)
    return replace(template, t2=ParametricMap("T2", t2), provenance=f"{template.provenance}|t2x{s:.6g}")


# --- plain-text configuration --------------------------------------------------


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; values are JSON, with bare ``inf`` allowed.

    Anything that does not parse as JSON is kept as a string.
    """
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        fixed = val.replace("-inf", "-Infinity").replace("inf", "Infinity")
        fixed = fixed.replace("-Infinityinity", "-Infinity").replace("Infinityinity", "Infinity")
        try:
            out[key] = json.loads(fixed)
        except json.JSONDecodeError:
            out[key] = val
    return out


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text())


def bounds_from_config(cfg: dict) -> RandomizationBounds:
    kw = {}
    for name in ("snr_db", "grad_fluct", "b1_scale", "v_ro", "v_pe", "omega", "t2_scale"):
        if name in cfg:
            lo, hi = cfg[name]
            kw[name] = (float(lo), float(hi))
    for name in ("p_noiseless", "snr_finite_max"):
        if name in cfg:
            kw[name] = float(cfg[name])
    for name in ("poly_order", "num_gaussians"):
        if name in cfg:
            kw[name] = int(cfg[name])
    b = RandomizationBounds(**kw)
    disabled = cfg.get("disable", [])
    if isinstance(disabled, str):
        disabled = [s.strip() for s in disabled.split(",") if s.strip()]
    return b.disable(*disabled)
