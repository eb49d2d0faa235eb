"""Linear MRI operators.

All transforms act on the last two axes, so a leading coil axis is carried
through untouched. Operators accept plain arrays or :class:`ComplexImage`;
domain tags are only checked on the latter.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimMismatch, DomainTagMismatch
from .rng import stream


@dataclass(frozen=True)
class ComplexImage:
    data: np.ndarray
    domain: str = "image"  # "image" | "kspace"

    def __post_init__(self):
        if self.domain not in ("image", "kspace"):
            raise ValueError(f"unknown domain {self.domain!r}")

    @property
    def shape(self):
        return self.data.shape


def _unwrap(x, expect: str):
    if isinstance(x, ComplexImage):
        if x.domain != expect:
            raise DomainTagMismatch(f"expected {expect}-domain input, got {x.domain}")
        return x.data, True
    return np.asarray(x), False


def fft2c(x):
    """Centered, orthonormal 2D DFT over the last two axes."""
    data, wrapped = _unwrap(x, "image")
    out = np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(data, axes=(-2, -1)), axes=(-2, -1), norm="ortho"), axes=(-2, -1)
    )
    return ComplexImage(out, "kspace") if wrapped else out


def ifft2c(x):
    data, wrapped = _unwrap(x, "kspace")
    out = np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(data, axes=(-2, -1)), axes=(-2, -1), norm="ortho"), axes=(-2, -1)
    )
    return ComplexImage(out, "image") if wrapped else out


@dataclass(frozen=True)
class CoilSet:
    maps: np.ndarray  # (num_coils, rows, cols) complex
    name: str = ""

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=np.complex128)
        if m.ndim != 3:
            raise DimMismatch(f"coil maps must be (coils, rows, cols), got {m.shape}")
        object.__setattr__(self, "maps", m)

    @property
    def num_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self):
        return self.maps.shape[1:]


def apply_coils(img, coils: CoilSet) -> np.ndarray:
    data = img.data if isinstance(img, ComplexImage) else np.asarray(img)
    if data.shape != coils.shape:
        raise DimMismatch(f"image {data.shape} vs coil maps {coils.shape}")
    return coils.maps * data[None]


def analytic_coils(
    num_coils: int,
    rows: int,
    cols: int,
    seed: int = 0,
    radius: float = 1.3,
    width: float = 0.9,
) -> CoilSet:
    """Smooth synthetic receive profiles around the FOV.

    Each coil is a Gaussian lobe centered on a ring of the given radius (FOV
    half-width = 1) with a gentle linear phase ramp. Maps are normalized to
    unit root-sum-of-squares at every pixel, as eigen-decomposition estimates
    are.
    """
    rng = stream(seed, "coils")
    y, x = np.meshgrid(np.linspace(-1, 1, rows), np.linspace(-1, 1, cols), indexing="ij")
    start = rng.uniform(0, 2 * np.pi)
    maps = np.empty((num_coils, rows, cols), dtype=np.complex128)
    for c in range(num_coils):
        ang = start + 2 * np.pi * c / num_coils + rng.uniform(-0.2, 0.2)
        r = radius * rng.uniform(0.9, 1.1)
        w = width * rng.uniform(0.8, 1.2)
        cx, cy = r * np.cos(ang), r * np.sin(ang)
        mag = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * w**2))
        phase = rng.uniform(-np.pi, np.pi) + rng.uniform(-1, 1) * x + rng.uniform(-1, 1) * y
        maps[c] = mag * np.exp(1j * phase)
    maps /= np.sqrt((np.abs(maps) ** 2).sum(axis=0))[None]
    return CoilSet(maps, name=f"analytic:{num_coils}:{seed}")


@dataclass(frozen=True)
class SamplingMask:
    lines: np.ndarray  # bool per PE line
    R: int = 1
    offset: int = 0
    num_cols: int = 0

    @classmethod
    def uniform(cls, num_lines: int, R: int = 2, offset: int = 0, num_cols: int | None = None) -> "SamplingMask":
        """Every R-th line starting at ``offset``; no extra calibration lines."""
        if R < 1 or not 0 <= offset < R:
            raise ValueError("need R >= 1 and 0 <= offset < R")
        lines = np.zeros(num_lines, dtype=bool)
        lines[offset::R] = True
        return cls(lines, R, offset, num_lines if num_cols is None else num_cols)

    def matrix(self) -> np.ndarray:
        return np.repeat(self.lines[:, None], self.num_cols, axis=1)


def apply_mask(ksp, mask: SamplingMask):
    data, wrapped = _unwrap(ksp, "kspace")
    if data.shape[-2] != mask.lines.size or (mask.num_cols and data.shape[-1] != mask.num_cols):
        raise DimMismatch(f"k-space {data.shape} vs mask {mask.lines.size}x{mask.num_cols}")
    out = data * mask.lines[:, None]
    return ComplexImage(out, "kspace") if wrapped else out


def downsample_u(arr) -> np.ndarray:
    """2x2 block mean over the last two axes."""
    a = np.asarray(arr)
    r, c = a.shape[-2:]
    if r % 2 or c % 2:
        raise DimMismatch(f"cannot 2x2-average a {r}x{c} grid")
    return a.reshape(*a.shape[:-2], r // 2, 2, c // 2, 2).mean(axis=(-3, -1))


def zero_pad_kspace(ksp, rows: int, cols: int | None = None, normalize: bool = True):
    """Symmetric zero-fill to (rows, cols), inverse transform, scale to max |.| = 1."""
    data, wrapped = _unwrap(ksp, "kspace")
    cols = rows if cols is None else cols
    r0, c0 = data.shape[-2:]
    if rows < r0 or cols < c0:
        raise DimMismatch(f"target {rows}x{cols} smaller than source {r0}x{c0}")
    out = np.zeros((*data.shape[:-2], rows, cols), dtype=np.complex128)
    top = rows // 2 - r0 // 2
    left = cols // 2 - c0 // 2
    out[..., top : top + r0, left : left + c0] = data
    img = ifft2c(out)
    if normalize:
        peak = np.abs(img).max()
        if peak > 0:
            img = img / peak
    return ComplexImage(img, "image") if wrapped else img


def coil_combine_rss(coil_imgs) -> np.ndarray:
    data = coil_imgs.data if isinstance(coil_imgs, ComplexImage) else np.asarray(coil_imgs)
    if data.ndim == 2:
        data = data[None]
    if data.shape[0] < 1:
        raise ValueError("need at least one coil")
    return np.sqrt((np.abs(data) ** 2).sum(axis=0))


def with_data(img: ComplexImage, data) -> ComplexImage:
    return replace(img, data=data)
