"""Quantitative parametric templates from weighted images.

The signal model is the saturation-recovery spin echo

    S = M0 * (1 - exp(-TR/T1)) * exp(-TE/T2)

A proton-density image (TE -> 0, TR >> T1) is normalized into a virtual M0
map, and any other weighted image is inverted pixelwise for T2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AllZeroImage, DimMismatch, NonSquareGrid

T2_MAX_MS = 650.0
T1_FIXED_MS = 2000.0

ROTATIONS = (0, 90, 180, 270)
FLIPS = ("none", "h", "v")


@dataclass(frozen=True)
class WeightedImage:
    data: np.ndarray
    te_ms: float
    tr_ms: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"expected a 2D image, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ValueError("weighted image must be finite and non-negative")
        if self.te_ms <= 0 or self.tr_ms <= 0:
            raise ValueError("te_ms and tr_ms must be positive")
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ParametricMap:
    kind: str  # "M0" | "T2" | "T1"
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in ("M0", "T2", "T1"):
            raise ValueError(f"unknown map kind {self.kind!r}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"expected a 2D map, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class ParametricTemplateSet:
    m0: ParametricMap
    t2: ParametricMap
    t1_fixed_ms: float = T1_FIXED_MS
    provenance: str = ""

    def __post_init__(self):
        if self.m0.shape != self.t2.shape:
            raise DimMismatch(f"M0 {self.m0.shape} vs T2 {self.t2.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.m0.shape


def pd_to_m0(pd: WeightedImage) -> ParametricMap:
    peak = pd.data.max()
    if not peak > 0:
        raise AllZeroImage("proton-density image has no positive pixel")
    return ParametricMap("M0", pd.data / peak)


def invert_t2(
    s: WeightedImage,
    m0: ParametricMap,
    t1_ms: float = T1_FIXED_MS,
    intensity_scale: float = 1.0,
) -> ParametricMap:
    """Pixelwise T2 from a weighted image and an M0 map.

    Degenerate pixels are clamped rather than dropped: M0 == 0 or a signal
    ratio >= 1 gives ``T2_MAX_MS``; a ratio <= 0 gives 0.
    """
    if s.data.shape != m0.shape:
        raise DimMismatch(f"signal {s.data.shape} vs M0 {m0.shape}")
    sat = 1.0 - np.exp(-s.tr_ms / t1_ms)
    denom = m0.data * sat
    sig = s.data * intensity_scale
    t2 = np.full(denom.shape, T2_MAX_MS)
    ok = denom > 0
    ratio = np.zeros_like(denom)
    with np.errstate(over="ignore"):
        ratio[ok] = sig[ok] / denom[ok]
    inner = ok & (ratio > 0) & (ratio < 1)
    t2[inner] = -s.te_ms / np.log(ratio[inner])
    t2[ok & (ratio <= 0)] = 0.0
    return ParametricMap("T2", np.clip(t2, 0.0, T2_MAX_MS))


def forward_signal(m0, t2_ms, te_ms: float, tr_ms: float, t1_ms: float = T1_FIXED_MS):
    """Evaluate the spin-echo signal model (vectorized over maps)."""
    m0 = np.asarray(m0, dtype=np.float64)
    t2_ms = np.asarray(t2_ms, dtype=np.float64)
    with np.errstate(divide="ignore"):
        decay = np.where(t2_ms > 0, np.exp(-te_ms / np.where(t2_ms > 0, t2_ms, 1.0)), 0.0)
    return m0 * (1.0 - np.exp(-tr_ms / t1_ms)) * decay


def _axis_weights(n_src: int, n_out: int):
    # pixel-center alignment, edge-clamped
    pos = (np.arange(n_out) + 0.5) * (n_src / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_src - 1)
    w = pos - lo
    return lo, hi, w


def resample_bilinear(pmap: ParametricMap, rows: int, cols: int) -> ParametricMap:
    if rows < 2 or cols < 2:
        raise ValueError("target grid must be at least 2x2")
    if pmap.shape == (rows, cols):
        return ParametricMap(pmap.kind, pmap.data.copy())
    src = pmap.data
    r_lo, r_hi, r_w = _axis_weights(src.shape[0], rows)
    c_lo, c_hi, c_w = _axis_weights(src.shape[1], cols)
    tmp = src[r_lo, :] * (1 - r_w)[:, None] + src[r_hi, :] * r_w[:, None]
    out = tmp[:, c_lo] * (1 - c_w)[None, :] + tmp[:, c_hi] * c_w[None, :]
    # convex combinations, but guard the last ulp
    out = np.clip(out, src.min(), src.max())
    return ParametricMap(pmap.kind, out)


def _transform(data: np.ndarray, rot: int, flip: str) -> np.ndarray:
    out = np.rot90(data, k=rot // 90)
    if flip == "h":
        out = out[:, ::-1]
    elif flip == "v":
        out = out[::-1, :]
    return np.ascontiguousarray(out)


def augment(tset: ParametricTemplateSet, rot: int = 0, flip: str = "none") -> ParametricTemplateSet:
    """Rotate (counter-clockwise, multiples of 90 degrees) and then flip all maps."""
    if rot not in ROTATIONS:
        raise ValueError(f"rot must be one of {ROTATIONS}")
    if flip not in FLIPS:
        raise ValueError(f"flip must be one of {FLIPS}")
    rows, cols = tset.shape
    if rot in (90, 270) and rows != cols:
        raise NonSquareGrid(f"cannot rotate a {rows}x{cols} grid by {rot} degrees")
    if rot == 0 and flip == "none":
        return tset
    return replace(
        tset,
        m0=ParametricMap("M0", _transform(tset.m0.data, rot, flip)),
        t2=ParametricMap("T2", _transform(tset.t2.data, rot, flip)),
        provenance=f"{tset.provenance}|rot{rot}|flip-{flip}",
    )


def synthesize_templates(
    pd: WeightedImage,
    t2w: WeightedImage,
    size: int | None = None,
    t1_ms: float = T1_FIXED_MS,
    intensity_scale: float = 1.0,
    provenance: str = "",
) -> ParametricTemplateSet:
    """Full template pipeline: M0 from PD, T2 by inversion, optional upsampling."""
    m0 = pd_to_m0(pd)
    t2 = invert_t2(t2w, m0, t1_ms=t1_ms, intensity_scale=intensity_scale)
    if size is not None and m0.shape != (size, size):
        m0 = resample_bilinear(m0, size, size)
        t2 = resample_bilinear(t2, size, size)
    return ParametricTemplateSet(m0=m0, t2=t2, t1_fixed_ms=t1_ms, provenance=provenance)


# --- built-in digital head -------------------------------------------------

# (PD, T1 ms, T2 ms)
_TISSUES = {
    "scalp": (0.85, 400.0, 70.0),
    "skull": (0.08, 300.0, 25.0),
    "csf": (1.00, 4000.0, 1500.0),
    "gm": (0.80, 1400.0, 100.0),
    "wm": (0.68, 850.0, 75.0),
}


@dataclass
class _Ellipse:
    cx: float
    cy: float
    ax: float
    ay: float
    theta: float = 0.0
    extra: dict = field(default_factory=dict)

    def mask(self, x, y):
        c, s = np.cos(self.theta), np.sin(self.theta)
        xr = (x - self.cx) * c + (y - self.cy) * s
        yr = -(x - self.cx) * s + (y - self.cy) * c
        return (xr / self.ax) ** 2 + (yr / self.ay) ** 2 <= 1.0


def _smooth_field(rng: np.random.Generator, n: int, width: float) -> np.ndarray:
    white = rng.standard_normal((n, n))
    f = np.fft.fftfreq(n)
    kern = np.exp(-(f[:, None] ** 2 + f[None, :] ** 2) / (2 * width**2))
    out = np.real(np.fft.ifft2(np.fft.fft2(white) * kern))
    return out / (np.abs(out).max() + 1e-12)


def synthetic_head(size: int = 256, seed: int = 0, te_ms: float = 100.0, tr_ms: float = 6000.0):
    """Registered (PD-weighted, T2-weighted) image pair of a textured digital head.

    Stands in for a public multi-contrast database when none is available.
    Tissue T1 differs from the fixed inversion T1 on purpose, as it would for
    real scans.
    """
    rng = np.random.default_rng(seed)
    g = (np.arange(size) + 0.5) / size * 2 - 1
    x, y = np.meshgrid(g, g)
    j = lambda s: 1.0 + s * rng.uniform(-1, 1)  # noqa: E731

    head = _Ellipse(0.0, 0.0, 0.78 * j(0.05), 0.92 * j(0.04), 0.1 * rng.uniform(-1, 1))
    skull = _Ellipse(head.cx, head.cy, head.ax - 0.06, head.ay - 0.06, head.theta)
    inner = _Ellipse(head.cx, head.cy, head.ax - 0.11, head.ay - 0.11, head.theta)
    brain = _Ellipse(head.cx, head.cy, head.ax - 0.14, head.ay - 0.14, head.theta)

    label = np.zeros((size, size), dtype=np.int8)  # 0 background
    label[head.mask(x, y)] = 1
    label[skull.mask(x, y)] = 2
    label[inner.mask(x, y)] = 3  # CSF rim
    folds = _smooth_field(rng, size, 0.04)
    in_brain = brain.mask(x, y) & (folds > -0.35)
    label[in_brain] = 4
    wm_level = 0.1 * rng.uniform(-1, 1)
    wm = _Ellipse(0.0, 0.02, brain.ax * 0.72, brain.ay * 0.75, head.theta).mask(x, y)
    label[in_brain & wm & (folds > wm_level - 0.2)] = 5
    for sgn in (-1, 1):
        vent = _Ellipse(sgn * 0.1 * j(0.2), -0.05 * j(0.3), 0.06 * j(0.3), 0.2 * j(0.2), sgn * 0.3)
        label[vent.mask(x, y)] = 3

    names = {1: "scalp", 2: "skull", 3: "csf", 4: "gm", 5: "wm"}
    pd = np.zeros((size, size))
    t1 = np.ones((size, size))
    t2 = np.ones((size, size))
    texture = 1.0 + 0.06 * _smooth_field(rng, size, 0.08)
    for code, name in names.items():
        m = label == code
        p, r1, r2 = _TISSUES[name]
        pd[m] = p
        t1[m] = r1
        t2[m] = r2 * j(0.05)
    pd = np.clip(pd * texture, 0.0, None)
    t2 = t2 * (2.0 - texture)

    s_pd = pd * 1000.0
    s_t2 = 1000.0 * forward_signal(pd, t2, te_ms, tr_ms, t1)
    s_t2[label == 0] = 0.0
    return WeightedImage(s_pd, te_ms=1e-3, tr_ms=1e6), WeightedImage(s_t2, te_ms=te_ms, tr_ms=tr_ms)


def builtin_template_pool(count: int, source_size: int, size: int, seed: int = 0):
    """Deterministic list of template sets built from the digital head."""
    pool = []
    for k in range(count):
        pd, t2w = synthetic_head(source_size, seed=seed * 1000 + k)
        pool.append(
            synthesize_templates(pd, t2w, size=size, provenance=f"builtin-head:{seed}:{k}")
        )
    return pool
