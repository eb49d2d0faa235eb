"""Isochromat Bloch simulation under hard pulses, gradients and rigid motion.

Conventions
-----------
* RF rotation: a pulse of phase 0 tips +z toward +y (nutation about +x in the
  sense of ``dM/dt = gamma M x B``). The achieved angle is nominal flip times
  the local B1+ multiplier.
* Precession: transverse magnetization ``Mx + iMy`` is multiplied by
  ``exp(-i * gamma * (G_RO * x + G_PE * y) * dt)``.
* Motion: a spin's position at shot time t is the reference coordinate rotated
  by ``omega * t`` about the pivot (default: FOV center), then translated by
  ``v * t``. Positions are taken at step midpoints.
* Signal: each sample is the mean of ``Mx + iMy`` over all spins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel
from .errors import DimMismatch
from .fields import MotionSpec, NonIdealSet, perturb_gradient_areas, pixel_coords
from .phantom import ParametricMap, ParametricTemplateSet, resample_bilinear
from .sequence import GAMMA, GAMMA_RAD_PER_S_PER_T, Event, SequenceProgram

DT_READOUT_MS = 0.003
DT_OTHER_MS = 0.1
_MERGE_EPS = 1e-9


@dataclass(frozen=True)
class PhysicsConstants:
    gamma_rad_per_s_per_t: float = GAMMA_RAD_PER_S_PER_T


@dataclass
class SpinGrid:
    x0: np.ndarray  # cm, (rows, cols)
    y0: np.ndarray
    mag: np.ndarray  # (rows, cols, 3)
    m0: np.ndarray
    t2_ms: np.ndarray
    t1_ms: np.ndarray
    fov_cm: float
    x: np.ndarray | None = None  # current position, if moved
    y: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.m0.shape

    @property
    def mxy(self) -> np.ndarray:
        return self.mag[..., 0] + 1j * self.mag[..., 1]

    def copy(self) -> "SpinGrid":
        return replace(self, mag=self.mag.copy())


@dataclass
class KSpaceData:
    data: np.ndarray  # (PE lines, RO samples), complex
    fov_cm: float
    esp_ms: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def init_spins(templates: ParametricTemplateSet, fov_cm: float) -> SpinGrid:
    rows, cols = templates.shape
    x, y = pixel_coords(rows, cols, fov_cm)
    m0 = templates.m0.data.astype(np.float64)
    mag = np.zeros((rows, cols, 3))
    mag[..., 2] = m0
    return SpinGrid(
        x0=x,
        y0=y,
        mag=mag,
        m0=m0,
        t2_ms=templates.t2.data.astype(np.float64),
        t1_ms=np.full((rows, cols), float(templates.t1_fixed_ms)),
        fov_cm=fov_cm,
    )


def _rotate(mag: np.ndarray, theta: np.ndarray, phase_rad: float) -> np.ndarray:
    nx, ny = math.cos(phase_rad), math.sin(phase_rad)
    vx, vy, vz = mag[..., 0], mag[..., 1], mag[..., 2]
    c, s = np.cos(theta), np.sin(theta)
    dot = (nx * vx + ny * vy) * (1 - c)
    out = np.empty_like(mag)
    out[..., 0] = vx * c - ny * vz * s + nx * dot
    out[..., 1] = vy * c + nx * vz * s + ny * dot
    out[..., 2] = vz * c - (nx * vy - ny * vx) * s
    return out


def apply_rf(spins: SpinGrid, rf: Event, b1=None) -> SpinGrid:
    """Instantaneous rotation by ``flip * b1`` about the transverse axis at the
    pulse phase."""
    if b1 is None:
        b1 = np.ones(spins.shape)
    b1 = np.asarray(b1, dtype=np.float64)
    if b1.shape != spins.shape:
        raise DimMismatch(f"B1 map {b1.shape} vs spin grid {spins.shape}")
    theta = math.radians(rf.flip_deg) * b1
    return replace(spins, mag=_rotate(spins.mag, theta, math.radians(rf.phase_deg)))


def motion_rates(motion: MotionSpec | None) -> tuple[float, float, float, float, float]:
    """(vx, vy) in cm/ms, omega in rad/ms, pivot (px, py) in cm."""
    if motion is None or not motion.enabled:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    px, py = motion.pivot_cm
    return motion.v_ro * 1e-3, motion.v_pe * 1e-3, math.radians(motion.omega) * 1e-3, float(px), float(py)


def positions(x0, y0, motion: MotionSpec | None, t_ms: float):
    """Rigidly moved coordinates at shot time ``t_ms``."""
    vx, vy, w, px, py = motion_rates(motion)
    th = w * t_ms
    c, s = math.cos(th), math.sin(th)
    dx, dy = x0 - px, y0 - py
    return px + c * dx - s * dy + vx * t_ms, py + s * dx + c * dy + vy * t_ms


def evolve(
    spins: SpinGrid,
    dt_ms: float,
    g_ro: float,
    g_pe: float,
    motion: MotionSpec | None = None,
    t_ms: float = 0.0,
) -> SpinGrid:
    """Free precession and relaxation over ``[t_ms, t_ms + dt_ms]``.

    The gradient phase uses the position at the step midpoint.
    """
    xm, ym = positions(spins.x0, spins.y0, motion, t_ms + 0.5 * dt_ms)
    phi = GAMMA * (g_ro * xm + g_pe * ym) * dt_ms
    with np.errstate(divide="ignore"):
        e2 = np.where(spins.t2_ms > 0, np.exp(-dt_ms / np.where(spins.t2_ms > 0, spins.t2_ms, 1.0)), 0.0)
        e1 = np.exp(-dt_ms / spins.t1_ms)
    if dt_ms == 0:
        e2 = np.ones_like(e2)
    mxy = spins.mxy * np.exp(-1j * phi) * e2
    mag = np.empty_like(spins.mag)
    mag[..., 0] = mxy.real
    mag[..., 1] = mxy.imag
    mag[..., 2] = spins.m0 + (spins.mag[..., 2] - spins.m0) * e1
    xe, ye = positions(spins.x0, spins.y0, motion, t_ms + dt_ms)
    return replace(spins, mag=mag, x=xe, y=ye)


def sample_signal(spins: SpinGrid, adc: Event, kspace: KSpaceData, index: int) -> KSpaceData:
    """Write sample ``index`` of ``adc`` (mean transverse magnetization).

    Reversed EPI lines are written right to left.
    """
    n_cols = kspace.data.shape[1]
    if not 0 <= adc.dest_line < kspace.data.shape[0]:
        raise IndexError(f"destination line {adc.dest_line} outside k-space")
    col = n_cols - 1 - index if adc.reverse else index
    kspace.data[adc.dest_line, col] = spins.mxy.mean()
    return kspace


# --- discretization -----------------------------------------------------------


@dataclass
class Timeline:
    """Step grid for a program.

    ``step_t`` has one entry per step boundary (n_steps + 1). Gradients are
    piecewise constant within each step.
    """

    step_t: np.ndarray
    g_ro: np.ndarray
    g_pe: np.ndarray
    # boundary-indexed actions, in time order
    act_kind: np.ndarray
    act_step: np.ndarray
    act_p0: np.ndarray  # RF flip (rad)
    act_p1: np.ndarray  # RF phase (rad)
    act_out: np.ndarray  # flat k-space index for samples
    act_event: list  # originating Event (RF / ADC / Delay)
    act_index: np.ndarray  # ADC sample index within its event

    @property
    def n_steps(self) -> int:
        return self.g_ro.shape[0]

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.step_t)


def _merge(times: np.ndarray) -> np.ndarray:
    times = np.unique(times)
    keep = np.concatenate(([True], np.diff(times) > _MERGE_EPS))
    return times[keep]


def _locate(bounds: np.ndarray, t: float) -> int:
    i = int(np.searchsorted(bounds, t - _MERGE_EPS))
    return min(i, bounds.size - 1)


def build_timeline(
    program: SequenceProgram,
    dt_readout_ms: float = DT_READOUT_MS,
    dt_other_ms: float = DT_OTHER_MS,
) -> Timeline:
    n = program.matrix
    times = [0.0, program.total_duration_ms]
    for e in program.events:
        times += [e.t_start_ms, e.t_end_ms]
        if e.kind == "ADC":
            times.extend(e.sample_times().tolist())
    bounds = _merge(np.asarray(times, dtype=np.float64))
    n_int = bounds.size - 1

    g_ro = np.zeros(n_int)
    g_pe = np.zeros(n_int)
    fine = np.zeros(n_int, dtype=bool)
    for e in program.events:
        if e.duration_ms <= 0 or e.kind not in ("Gradient", "ADC"):
            continue
        i0, i1 = _locate(bounds, e.t_start_ms), _locate(bounds, e.t_end_ms)
        if e.kind == "ADC" or e.tag in ("readout", "blip"):
            fine[i0:i1] = True
        if e.kind == "Gradient":
            (g_ro if e.axis == "RO" else g_pe)[i0:i1] += e.amplitude

    length = np.diff(bounds)
    active = (g_ro != 0) | (g_pe != 0)
    dt_max = np.where(fine, dt_readout_ms, dt_other_ms)
    n_sub = np.where(active, np.maximum(1, np.ceil(length / dt_max - 1e-9)).astype(np.int64), 1)
    offsets = np.concatenate(([0], np.cumsum(n_sub)))
    first = np.repeat(offsets[:-1], n_sub)
    k = np.arange(offsets[-1]) - first
    h = np.repeat(length / n_sub, n_sub)
    step_t = np.empty(offsets[-1] + 1)
    step_t[:-1] = np.repeat(bounds[:-1], n_sub) + k * h
    step_t[-1] = bounds[-1]
    # exact boundary instants
    step_t[offsets] = bounds

    acts = []  # (time, order, kind, step, p0, p1, out, event, index)
    for e in program.events:
        b = offsets[_locate(bounds, e.t_start_ms)]
        if e.kind == "RF":
            acts.append((e.t_start_ms, 1, _kernel.ACT_RF, b, math.radians(e.flip_deg), math.radians(e.phase_deg), -1, e, -1))
        elif e.kind == "Delay" and e.spoil:
            acts.append((e.t_start_ms, 2, _kernel.ACT_SPOIL, b, 0.0, 0.0, -1, e, -1))
        elif e.kind == "ADC":
            for j, ts in enumerate(e.sample_times()):
                col = n - 1 - j if e.reverse else j
                st = offsets[_locate(bounds, ts)]
                acts.append((ts, 0, _kernel.ACT_SAMPLE, st, 0.0, 0.0, e.dest_line * n + col, e, j))
    acts.sort(key=lambda a: (a[0], a[1]))
    return Timeline(
        step_t=step_t,
        g_ro=np.repeat(g_ro, n_sub),
        g_pe=np.repeat(g_pe, n_sub),
        act_kind=np.array([a[2] for a in acts], dtype=np.int64),
        act_step=np.array([a[3] for a in acts], dtype=np.int64),
        act_p0=np.array([a[4] for a in acts], dtype=np.float64),
        act_p1=np.array([a[5] for a in acts], dtype=np.float64),
        act_out=np.array([a[6] for a in acts], dtype=np.int64),
        act_event=[a[7] for a in acts],
        act_index=np.array([a[8] for a in acts], dtype=np.int64),
    )


def phase_coefficients(tl: Timeline, motion: MotionSpec | None):
    """Cumulative (A, B, C) so that the phase accrued between boundaries i < j
    is ``x0*(A[j]-A[i]) + y0*(B[j]-B[i]) + (C[j]-C[i])``."""
    vx, vy, w, px, py = motion_rates(motion)
    dt = tl.dt
    tm = tl.step_t[:-1] + 0.5 * dt
    th = w * tm
    c, s = np.cos(th), np.sin(th)
    k = GAMMA * dt
    gr, gp = tl.g_ro, tl.g_pe
    a = k * (gr * c + gp * s)
    b = k * (gp * c - gr * s)
    tx = px - c * px + s * py + vx * tm
    ty = py - s * px - c * py + vy * tm
    cc = k * (gr * tx + gp * ty)
    cum = lambda v: np.concatenate(([0.0], np.cumsum(v)))  # noqa: E731
    return cum(a), cum(b), cum(cc)


def _relax_rates(t_ms: np.ndarray, zero_means_instant: bool) -> np.ndarray:
    t = np.asarray(t_ms, dtype=np.float64).ravel()
    out = np.zeros_like(t)
    pos = np.isfinite(t) & (t > 0)
    out[pos] = 1.0 / t[pos]
    if zero_means_instant:
        out[t <= 0] = 1e30
    return out


def _resolve_b1(b1, shape) -> np.ndarray:
    if b1 is None:
        return np.ones(shape)
    b1 = np.asarray(b1, dtype=np.float64)
    if b1.shape != shape:
        b1 = resample_bilinear(ParametricMap("T1", b1), *shape).data
    return b1


def prepare_program(program: SequenceProgram, nonideals: NonIdealSet | None) -> SequenceProgram:
    if nonideals is not None and nonideals.grad_max_frac > 0:
        return perturb_gradient_areas(program, nonideals.grad_max_frac, nonideals.grad_seed)
    return program


def simulate(
    program: SequenceProgram,
    templates: ParametricTemplateSet,
    nonideals: NonIdealSet | None = None,
    fov_cm: float | None = None,
    dt_readout_ms: float = DT_READOUT_MS,
    dt_other_ms: float = DT_OTHER_MS,
) -> KSpaceData:
    """Run ``program`` over the spin grid built from ``templates``.

    Deterministic: spins are reduced in fixed chunks combined in index order,
    independent of the number of threads.
    """
    fov = program.fov_cm if fov_cm is None else fov_cm
    nonideals = nonideals or NonIdealSet()
    program = prepare_program(program, nonideals)
    tl = build_timeline(program, dt_readout_ms, dt_other_ms)
    cum_a, cum_b, cum_c = phase_coefficients(tl, nonideals.motion)
    rows, cols = templates.shape
    x, y = pixel_coords(rows, cols, fov)
    b1 = _resolve_b1(nonideals.b1, (rows, cols))
    n = program.matrix
    partial = _kernel.run_spins(
        np.ascontiguousarray(x.ravel()),
        np.ascontiguousarray(y.ravel()),
        np.ascontiguousarray(templates.m0.data.ravel(), dtype=np.float64),
        _relax_rates(np.full(rows * cols, templates.t1_fixed_ms), False),
        _relax_rates(templates.t2.data, True),
        np.ascontiguousarray(b1.ravel()),
        cum_a,
        cum_b,
        cum_c,
        tl.step_t,
        tl.act_kind,
        tl.act_step,
        tl.act_p0,
        tl.act_p1,
        tl.act_out,
        n * n,
    )
    data = partial.sum(axis=0) / (rows * cols)
    return KSpaceData(
        data.reshape(n, n),
        fov_cm=fov,
        esp_ms=float(program.meta.get("esp_ms", 0.0)),
        meta={"program": program.meta.get("kind"), "spins": [rows, cols]},
    )


def simulate_reference(
    program: SequenceProgram,
    templates: ParametricTemplateSet,
    nonideals: NonIdealSet | None = None,
    fov_cm: float | None = None,
    dt_readout_ms: float = DT_READOUT_MS,
    dt_other_ms: float = DT_OTHER_MS,
    check_norm: bool = False,
) -> KSpaceData:
    """Step-by-step simulation with :func:`evolve`, :func:`apply_rf` and
    :func:`sample_signal`. Slow; meant for small grids and cross-checks."""
    fov = program.fov_cm if fov_cm is None else fov_cm
    nonideals = nonideals or NonIdealSet()
    program = prepare_program(program, nonideals)
    tl = build_timeline(program, dt_readout_ms, dt_other_ms)
    spins = init_spins(templates, fov)
    b1 = _resolve_b1(nonideals.b1, spins.shape)
    motion = nonideals.motion
    n = program.matrix
    ksp = KSpaceData(np.zeros((n, n), dtype=np.complex128), fov, float(program.meta.get("esp_ms", 0.0)))
    step = 0
    dts = tl.dt
    for a in range(tl.act_kind.size):
        target = tl.act_step[a]
        while step < target:
            spins = evolve(spins, dts[step], tl.g_ro[step], tl.g_pe[step], motion, tl.step_t[step])
            step += 1
        kind = tl.act_kind[a]
        ev = tl.act_event[a]
        if kind == _kernel.ACT_SAMPLE:
            sample_signal(spins, ev, ksp, int(tl.act_index[a]))
        elif kind == _kernel.ACT_RF:
            spins = apply_rf(spins, ev, b1)
        else:
            mag = spins.mag.copy()
            mag[..., :2] = 0.0
            spins = replace(spins, mag=mag)
        if check_norm:
            assert_norm_bounded(spins)
    return ksp


def assert_norm_bounded(spins: SpinGrid, rtol: float = 1e-9) -> None:
    norm = np.linalg.norm(spins.mag, axis=-1)
    if np.any(norm > np.abs(spins.m0) * (1 + rtol) + 1e-15):
        raise AssertionError(f"magnetization norm exceeds M0 by {float((norm - spins.m0).max())}")


def reconstruct(kspace: KSpaceData | np.ndarray) -> np.ndarray:
    """Complex image from simulated k-space, scaled so a uniform object of
    magnetization m reconstructs to m."""
    from .mriops import ifft2c

    data = kspace.data if isinstance(kspace, KSpaceData) else kspace
    return ifft2c(data) * math.sqrt(data.shape[-1] * data.shape[-2])
