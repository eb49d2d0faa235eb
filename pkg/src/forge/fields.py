"""Non-ideal factors: transmit-field maps, rigid-motion velocity fields,
gradient-area fluctuation and complex Gaussian noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import stream
from .sequence import SequenceProgram

B1_BOUNDS = (0.7, 1.2)


@dataclass(frozen=True)
class B1FieldSpec:
    poly_coeffs: np.ndarray  # (Np+1, Np+1), [n_x, n_y]
    gaussians: tuple[tuple[float, float, float, float], ...] = ()  # (cx, cy, sigma, amplitude)
    norm_bounds: tuple[float, float] = B1_BOUNDS

    def __post_init__(self):
        c = np.asarray(self.poly_coeffs, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("poly_coeffs must be square (Np+1)x(Np+1)")
        object.__setattr__(self, "poly_coeffs", c)
        object.__setattr__(self, "gaussians", tuple(tuple(map(float, g)) for g in self.gaussians))
        for g in self.gaussians:
            if g[2] <= 0:
                raise ValueError("Gaussian sigma must be positive")
        lo, hi = self.norm_bounds
        if not lo < hi:
            raise ValueError("norm_bounds must satisfy lo < hi")

    @property
    def poly_order(self) -> int:
        return self.poly_coeffs.shape[0] - 1

    @property
    def num_gaussians(self) -> int:
        return len(self.gaussians)

    @classmethod
    def zero(cls, poly_order: int = 2, bounds=B1_BOUNDS) -> "B1FieldSpec":
        return cls(np.zeros((poly_order + 1, poly_order + 1)), (), bounds)

    @classmethod
    def random(cls, rng: np.random.Generator, poly_order: int = 2, num_gaussians: int = 1, bounds=B1_BOUNDS):
        coeffs = rng.uniform(-1.0, 1.0, size=(poly_order + 1, poly_order + 1))
        gauss = tuple(
            (rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1.0), rng.uniform(-1, 1))
            for _ in range(num_gaussians)
        )
        return cls(coeffs, gauss, bounds)

    def to_dict(self) -> dict:
        return {
            "poly_coeffs": self.poly_coeffs.tolist(),
            "gaussians": [list(g) for g in self.gaussians],
            "norm_bounds": list(self.norm_bounds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "B1FieldSpec":
        return cls(np.array(d["poly_coeffs"]), tuple(map(tuple, d["gaussians"])), tuple(d["norm_bounds"]))


def b1_delta(spec: B1FieldSpec, x, y):
    """Un-normalized field perturbation at normalized coordinates (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros(np.broadcast(x, y).shape)
    n = spec.poly_order
    for nx in range(n + 1):
        for ny in range(n + 1):
            c = spec.poly_coeffs[nx, ny]
            if c != 0.0:
                out = out + c * x**nx * y**ny
    for cx, cy, sigma, amp in spec.gaussians:
        out = out + amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2))
    return out


def normalized_grid(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates spanning [-1, 1] on both axes; x follows columns."""
    y, x = np.meshgrid(np.linspace(-1, 1, rows), np.linspace(-1, 1, cols), indexing="ij")
    return x, y


def normalize_to_bounds(delta: np.ndarray, bounds) -> np.ndarray:
    lo, hi = bounds
    dmin, dmax = delta.min(), delta.max()
    if dmax == dmin:
        return np.full(delta.shape, 0.5 * (lo + hi))
    out = lo + (delta - dmin) * ((hi - lo) / (dmax - dmin))
    # pin the extremes against rounding
    out[delta == dmin] = lo
    out[delta == dmax] = hi
    return np.clip(out, lo, hi)


def gen_b1(spec: B1FieldSpec, rows: int, cols: int, seed: int | None = None) -> np.ndarray:
    """B1+ multiplier map. ``seed`` is unused because the B1FieldSpec is explicit; pass a
    spec from :meth:`B1FieldSpec.random` for a random field."""
    x, y = normalized_grid(rows, cols)
    return normalize_to_bounds(b1_delta(spec, x, y), spec.norm_bounds)


def random_b1(rows: int, cols: int, seed: int, bounds=B1_BOUNDS, poly_order: int = 2, num_gaussians: int = 1):
    spec = B1FieldSpec.random(stream(seed, "b1"), poly_order, num_gaussians, bounds)
    return gen_b1(spec, rows, cols), spec


@dataclass(frozen=True)
class MotionSpec:
    v_ro: float = 0.0  # cm/s
    v_pe: float = 0.0  # cm/s
    omega: float = 0.0  # deg/s
    enabled: bool = True
    pivot_cm: tuple[float, float] = (0.0, 0.0)

    @property
    def is_static(self) -> bool:
        return not self.enabled or (self.v_ro == 0 and self.v_pe == 0 and self.omega == 0)

    def scaled(self, a: float) -> "MotionSpec":
        return replace(self, v_ro=a * self.v_ro, v_pe=a * self.v_pe, omega=a * self.omega)


@dataclass(frozen=True)
class VelocityField:
    v_ro_field: np.ndarray
    v_pe_field: np.ndarray


def pixel_coords(rows: int, cols: int, fov_cm: float) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-center physical coordinates (cm) with the origin at the grid center."""
    dx = fov_cm / cols
    dy = fov_cm / rows
    xs = (np.arange(cols) + 0.5) * dx - fov_cm / 2
    ys = (np.arange(rows) + 0.5) * dy - fov_cm / 2
    y, x = np.meshgrid(ys, xs, indexing="ij")
    return x, y


def gen_velocity_field(motion: MotionSpec, rows: int, cols: int, fov_cm: float) -> VelocityField:
    if fov_cm <= 0:
        raise ValueError("fov_cm must be positive")
    x, y = pixel_coords(rows, cols, fov_cm)
    if not motion.enabled:
        zero = np.zeros((rows, cols))
        return VelocityField(zero, zero.copy())
    w = math.radians(motion.omega)
    px, py = motion.pivot_cm
    return VelocityField(-w * (y - py) + motion.v_ro, w * (x - px) + motion.v_pe)


def gradient_scale_factors(program: SequenceProgram, max_frac: float, seed: int) -> dict[int, float]:
    """Event index -> amplitude factor for every echo-shift gradient."""
    idx = [i for i, e in enumerate(program.events) if e.kind == "Gradient" and e.tag == "echo_shift"]
    if max_frac == 0 or not idx:
        return {}
    u = stream(seed, "grad_fluct").uniform(-max_frac, max_frac, size=len(idx))
    return {i: 1.0 + float(v) for i, v in zip(idx, u)}


def perturb_gradient_areas(program: SequenceProgram, max_frac: float, seed: int) -> SequenceProgram:
    if max_frac < 0:
        raise ValueError("max_frac must be non-negative")
    factors = gradient_scale_factors(program, max_frac, seed)
    if not factors:
        return program
    events = list(program.events)
    for i, f in factors.items():
        events[i] = replace(events[i], amplitude=events[i].amplitude * f)
    meta = dict(program.meta)
    meta["grad_fluct"] = {"max_frac": max_frac, "seed": int(seed)}
    return replace(program, events=tuple(events), meta=meta)


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = math.inf
    seed: int = 0


def noise_sigma(peak: float, snr_db: float) -> float:
    if math.isinf(snr_db):
        return 0.0
    return peak / 10.0 ** (snr_db / 20.0)


def add_noise(img, spec: NoiseSpec, tag: str = "noise"):
    """Add zero-mean Gaussian noise of equal variance to real and imaginary parts.

    SNR is peak-referenced: sigma = max|img| / 10**(snr_db / 20). ``img`` may be
    an array or anything with a ``data`` array attribute (returned re-wrapped).
    """
    data = img.data if hasattr(img, "data") and not isinstance(img, np.ndarray) else img
    data = np.asarray(data)
    if data.size == 0:
        raise ValueError("cannot add noise to an empty image")
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        return img
    sigma = noise_sigma(float(np.abs(data).max()), spec.snr_db)
    rng = stream(spec.seed, tag)
    noise = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
    out = data + sigma * noise
    if data is img:
        return out
    return replace(img, data=out)


@dataclass(frozen=True)
class NonIdealSet:
    """Everything that perturbs an ideal acquisition."""

    b1: np.ndarray | None = None
    motion: MotionSpec = field(default_factory=lambda: MotionSpec(enabled=False))
    grad_max_frac: float = 0.0
    grad_seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
