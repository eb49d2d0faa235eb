"""Composed forward models that turn templates into paired training samples.

Parallel-imaging pair (fully sampled vs. under-sampled multi-coil images)::

    label = C F^-1 B(templates)
    input = F^-1 Phi F label

Motion pair (motion-corrupted overlapping-echo image vs. down-sampled maps)::

    input  = F^-1 B T_vt R_wt (templates)
    labels = U(T2), U(V_RO), U(V_PE), U(B1)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bloch import reconstruct, simulate
from .fields import MotionSpec, NoiseSpec, NonIdealSet, gen_velocity_field, noise_sigma
from .mriops import (
    CoilSet,
    SamplingMask,
    apply_coils,
    apply_mask,
    downsample_u,
    fft2c,
    ifft2c,
    zero_pad_kspace,
)
from .phantom import ParametricTemplateSet
from .rng import stream
from .sequence import SequenceProgram


@dataclass
class SamplePair:
    kind: str  # "Dp" | "Dm"
    input: np.ndarray
    labels: dict[str, np.ndarray]
    draw: object = None
    ids: dict = field(default_factory=dict)


def _noisy(data: np.ndarray, sigma: float, seed: int, tag: str) -> np.ndarray:
    if sigma == 0:
        return data
    rng = stream(seed, tag)
    return data + sigma * (rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape))


def forward_parallel_pair(
    templates: ParametricTemplateSet,
    coils: CoilSet,
    mask: SamplingMask,
    nonideals: NonIdealSet,
    program: SequenceProgram,
) -> SamplePair:
    """Multi-coil (input, label) pair; noise is added after masking, to both,
    independently, at the level set by the label's peak magnitude."""
    if not nonideals.motion.is_static:
        raise ValueError("parallel-imaging pairs are generated without motion")
    single = reconstruct(simulate(program, templates, nonideals))
    label = apply_coils(single, coils)
    inp = ifft2c(apply_mask(fft2c(label), mask))
    noise = nonideals.noise
    sigma = noise_sigma(float(np.abs(label).max()), noise.snr_db)
    return SamplePair(
        kind="Dp",
        input=_noisy(inp, sigma, noise.seed, "noise-input"),
        labels={"fullsampled_coils": _noisy(label, sigma, noise.seed, "noise-label")},
    )


def downsample_to(arr: np.ndarray, size: int) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    while out.shape[-1] > size:
        out = downsample_u(out)
    if out.shape[-1] != size:
        raise ValueError(f"cannot reach {size} by 2x2 averaging from {arr.shape}")
    return out


def forward_motion_pair(
    templates: ParametricTemplateSet,
    motion: MotionSpec,
    b1: np.ndarray | None,
    program: SequenceProgram,
    grad_max_frac: float = 0.0,
    grad_seed: int = 0,
    noise: NoiseSpec | None = None,
    label_size: int | None = None,
) -> SamplePair:
    """Overlapping-echo image under motion, paired with down-sampled maps.

    The acquired image is noised at its own resolution, then zero-filled in
    k-space to the label grid and scaled to unit peak magnitude.
    """
    rows, cols = templates.shape
    label_size = rows // 2 if label_size is None else label_size
    fov = program.fov_cm
    nonideals = NonIdealSet(b1=b1, motion=motion, grad_max_frac=grad_max_frac, grad_seed=grad_seed)
    img = reconstruct(simulate(program, templates, nonideals))
    noise = noise or NoiseSpec()
    if not math.isinf(noise.snr_db):
        img = _noisy(img, noise_sigma(float(np.abs(img).max()), noise.snr_db), noise.seed, "noise-input")
    inp = zero_pad_kspace(fft2c(img), label_size, label_size)
    vel = gen_velocity_field(motion, rows, cols, fov)
    b1_map = np.ones((rows, cols)) if b1 is None else b1
    labels = {
        "T2": downsample_to(templates.t2.data, label_size),
        "velocity_ro": downsample_to(vel.v_ro_field, label_size),
        "velocity_pe": downsample_to(vel.v_pe_field, label_size),
        "b1": downsample_to(b1_map, label_size),
    }
    return SamplePair(kind="Dm", input=inp, labels=labels)
