"""Time-stamped pulse-sequence programs.

Gradients are ideal rectangles and RF pulses are instantaneous. Times are in
ms, gradient amplitudes in mT/m, lengths in cm. Gradient areas are expressed
in k-space index units: an area of 1 moves the trajectory by 1/FOV.

k-space convention: row ``ky + N/2`` and column ``kx + N/2`` of a
``(N, N)`` array hold the sample at integer index (kx, ky).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidTiming

GAMMA_RAD_PER_S_PER_T = 2.675e8
# same constant in rad / (mT/m * cm * ms)
GAMMA = GAMMA_RAD_PER_S_PER_T * 1e-3 * 1e-2 * 1e-3

DEFAULT_TES_MS = (22.0, 52.0, 82.0, 110.0)
DEFAULT_ESP_MS = 0.465

_TIME_EPS = 1e-9


@dataclass(frozen=True)
class Event:
    kind: str  # "RF" | "Gradient" | "ADC" | "Delay"
    t_start_ms: float
    duration_ms: float = 0.0
    # RF
    flip_deg: float = 0.0
    phase_deg: float = 0.0
    role: str = ""  # "excitation" | "refocusing"
    # Gradient
    axis: str = ""  # "RO" | "PE"
    amplitude: float = 0.0
    tag: str = ""  # "echo_shift" | "readout" | "blip" | "crusher" | "prephaser"
    # ADC
    num_samples: int = 0
    dwell_ms: float = 0.0
    dest_line: int = -1
    reverse: bool = False
    # Delay
    spoil: bool = False

    @property
    def t_end_ms(self) -> float:
        return self.t_start_ms + self.duration_ms

    def sample_times(self) -> np.ndarray:
        """ADC sample instants: the middle of each dwell interval."""
        return self.t_start_ms + (np.arange(self.num_samples) + 0.5) * self.dwell_ms

    def describe(self) -> str:
        head = f"{self.kind:<8} t={self.t_start_ms:.6f} dur={self.duration_ms:.6f}"
        if self.kind == "RF":
            return f"{head} flip={self.flip_deg:g} phase={self.phase_deg:g} role={self.role}"
        if self.kind == "Gradient":
            return f"{head} axis={self.axis} amp={self.amplitude:.9g} tag={self.tag}"
        if self.kind == "ADC":
            return (
                f"{head} samples={self.num_samples} dwell={self.dwell_ms:.9g} "
                f"line={self.dest_line} reverse={int(self.reverse)}"
            )
        return f"{head} spoil={int(self.spoil)}"


@dataclass(frozen=True)
class SequenceProgram:
    events: tuple[Event, ...]
    total_duration_ms: float
    meta: dict = field(default_factory=dict)

    @property
    def matrix(self) -> int:
        return int(self.meta["matrix"])

    @property
    def fov_cm(self) -> float:
        return float(self.meta["fov_cm"])

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def rf_events(self) -> list[Event]:
        return self.of_kind("RF")

    def adc_events(self) -> list[Event]:
        return self.of_kind("ADC")

    def gradients(self, axis: str | None = None) -> list[Event]:
        return [e for e in self.events if e.kind == "Gradient" and (axis is None or e.axis == axis)]

    def dump(self) -> str:
        lines = [f"# program {self.meta.get('kind', '?')} total={self.total_duration_ms:.6f}"]
        for k in sorted(self.meta):
            lines.append(f"# {k} = {self.meta[k]}")
        lines.extend(e.describe() for e in self.events)
        return "\n".join(lines) + "\n"


def _program(events, total, meta) -> SequenceProgram:
    ordered = tuple(sorted(events, key=lambda e: e.t_start_ms))
    return SequenceProgram(ordered, float(total), dict(meta))


def amplitude_for_area(area: float, duration_ms: float, fov_cm: float) -> float:
    """Gradient amplitude (mT/m) whose area over ``duration_ms`` is ``area`` k-indices."""
    return 2.0 * math.pi * area / (GAMMA * duration_ms * fov_cm)


def gradient_area(ev: Event, fov_cm: float) -> float:
    """Area of a gradient event in k-index units."""
    return GAMMA * ev.amplitude * ev.duration_ms * fov_cm / (2.0 * math.pi)


def _grad(axis, area, t0, dur, fov, tag) -> list[Event]:
    if area == 0:
        return []
    return [
        Event(
            "Gradient",
            t0,
            dur,
            axis=axis,
            amplitude=amplitude_for_area(area, dur, fov),
            tag=tag,
        )
    ]


def epi_timing(matrix: int, esp_ms: float, blip_frac: float = 0.1) -> tuple[float, float]:
    """(readout lobe duration, dwell) for one EPI line."""
    t_ro = esp_ms * (1.0 - blip_frac)
    return t_ro, t_ro / matrix


def build_epi_readout(
    matrix: int,
    esp_ms: float,
    R: int = 1,
    fov_cm: float = 22.0,
    t0_ms: float = 0.0,
    blip_frac: float = 0.1,
    synthetic: bool = True,
) -> list[Event]:
    """Alternating-polarity readout lobes, PE blips and one ADC per line.

    In synthetic mode every one of the ``matrix`` lines is emitted at
    ``esp_ms``; under-sampling happens later through a mask. With
    ``synthetic=False`` only every R-th line is played (blip area R), which is
    how an accelerated scan keeps the same train length at R times the ESP.
    The caller is responsible for the prephasers.
    """
    if matrix % R:
        raise ValueError(f"matrix {matrix} not divisible by R={R}")
    if not 0.0 < blip_frac < 1.0:
        raise ValueError("blip_frac must be in (0, 1)")
    step = 1 if synthetic else R
    n_lines = matrix // step
    t_ro, dwell = epi_timing(matrix, esp_ms, blip_frac)
    t_blip = esp_ms - t_ro
    g_ro = amplitude_for_area(1.0, dwell, fov_cm)
    events: list[Event] = []
    for line in range(n_lines):
        t = t0_ms + line * esp_ms
        sign = 1.0 if line % 2 == 0 else -1.0
        events.append(Event("Gradient", t, t_ro, axis="RO", amplitude=sign * g_ro, tag="readout"))
        events.append(
            Event(
                "ADC",
                t,
                t_ro,
                num_samples=matrix,
                dwell_ms=dwell,
                dest_line=line * step,
                reverse=bool(line % 2),
            )
        )
        if line < n_lines - 1:
            events += _grad("PE", float(step), t + t_ro, t_blip, fov_cm, "blip")
    return events


def _prephasers(matrix, t0, dur, fov, ky_start=None):
    ky = -(matrix // 2) if ky_start is None else ky_start
    return _grad("RO", -(matrix / 2 + 0.5), t0, dur, fov, "prephaser") + _grad(
        "PE", float(ky), t0, dur, fov, "prephaser"
    )


def quadrant_offsets(matrix: int) -> list[tuple[int, int]]:
    """(kx, ky) echo centers, one per echo in ascending-TE order."""
    q = matrix // 4
    return [(-q, -q), (q, -q), (-q, q), (q, q)]


def build_se_moled(
    matrix: int = 128,
    fov_cm: float = 22.0,
    esp_ms: float = DEFAULT_ESP_MS,
    tes_ms=DEFAULT_TES_MS,
    alpha_deg: float = 30.0,
    beta_deg: float = 180.0,
    shift_ms: float = 2.0,
    crusher_ms: float = 1.0,
    prephase_ms: float = 1.0,
    blip_frac: float = 0.1,
    crusher_factor: float = 4.0,
) -> SequenceProgram:
    """Single-shot spin-echo overlapping-echo program.

    Four excitations share one refocusing pulse. The excitation for echo i
    sits at ``t_ref - TE_i / 2`` so its spin echo forms at ``t_ref + TE_i / 2``,
    inside the EPI train. Echo-shifting lobes after each excitation are sized
    so that the accumulated pre-refocusing area of echo i equals its quadrant
    offset; the echo therefore peaks at that k-space position.
    """
    tes = [float(t) for t in tes_ms]
    if len(tes) != 4:
        raise ValueError("SE-MOLED takes exactly four echo times")
    if any(b <= a for a, b in zip(tes, tes[1:])) or tes[0] <= 0:
        raise InvalidTiming(f"echo times must be positive and strictly increasing: {tes}")
    if matrix % 4:
        raise ValueError("matrix must be a multiple of 4")

    t_ref = tes[-1] / 2.0
    offsets = quadrant_offsets(matrix)
    # time order = descending TE
    order = sorted(range(4), key=lambda i: -tes[i])
    t_exc = [t_ref - tes[i] / 2.0 for i in order]
    cum = [np.array(offsets[i], dtype=float) for i in order]
    lobes = [cum[e] - (cum[e + 1] if e + 1 < 4 else 0.0) for e in range(4)]

    for e in range(4):
        nxt = t_exc[e + 1] if e + 1 < 4 else t_ref - crusher_ms
        if t_exc[e] + shift_ms > nxt + _TIME_EPS:
            raise InvalidTiming(
                f"echo-shift lobe after excitation at {t_exc[e]:.3f} ms overruns {nxt:.3f} ms"
            )

    events: list[Event] = []
    for e in range(4):
        events.append(Event("RF", t_exc[e], flip_deg=alpha_deg, phase_deg=0.0, role="excitation"))
        kx, ky = lobes[e]
        events += _grad("RO", float(kx), t_exc[e], shift_ms, fov_cm, "echo_shift")
        events += _grad("PE", float(ky), t_exc[e], shift_ms, fov_cm, "echo_shift")

    max_lobe = max(float(np.hypot(*lobe)) for lobe in lobes)
    crush = float(math.ceil(crusher_factor * max_lobe))
    events += _grad("RO", crush, t_ref - crusher_ms, crusher_ms, fov_cm, "crusher")
    events.append(Event("RF", t_ref, flip_deg=beta_deg, phase_deg=90.0, role="refocusing"))
    events += _grad("RO", crush, t_ref, crusher_ms, fov_cm, "crusher")
    t_pre = t_ref + crusher_ms
    events += _prephasers(matrix, t_pre, prephase_ms, fov_cm)
    t_ro = t_pre + prephase_ms
    events += build_epi_readout(matrix, esp_ms, 1, fov_cm, t_ro, blip_frac)
    t_end = t_ro + matrix * esp_ms

    for te in tes:
        t_echo = t_ref + te / 2.0
        if not (t_ro - _TIME_EPS <= t_echo <= t_end + _TIME_EPS):
            raise InvalidTiming(
                f"spin echo for TE={te} ms at {t_echo:.3f} ms falls outside readout "
                f"[{t_ro:.3f}, {t_end:.3f}] ms"
            )

    _, dwell = epi_timing(matrix, esp_ms, blip_frac)
    meta = {
        "kind": "se_moled",
        "matrix": matrix,
        "fov_cm": fov_cm,
        "esp_ms": esp_ms,
        "R": 1,
        "tes_ms": tes,
        "echo_offsets": offsets,
        "refocus_ms": t_ref,
        "readout_start_ms": t_ro,
        "readout_duration_ms": matrix * esp_ms,
        "dwell_ms": dwell,
        "crusher_area": crush,
    }
    return _program(events, t_end, meta)


def build_se(
    te_ms: float,
    tr_ms: float,
    matrix: int = 64,
    fov_cm: float = 22.0,
    esp_ms: float = DEFAULT_ESP_MS,
    readout: str = "segmented",
    crusher_ms: float = 1.0,
    prephase_ms: float = 1.0,
    blip_frac: float = 0.1,
) -> SequenceProgram:
    """Conventional 90-180 spin echo, used as an analytic reference.

    ``readout="segmented"`` acquires one k-line per shot (one shot per TR) with
    the center sample of every line at TE; transverse magnetization is spoiled
    at the end of each shot. ``readout="epi"`` plays the whole train in one shot,
    centered on TE, and raises InvalidTiming if it does not fit.
    """
    if te_ms <= 0:
        raise ValueError("te_ms must be positive")
    t_lobe, dwell = epi_timing(matrix, esp_ms, blip_frac)
    g_ro = amplitude_for_area(1.0, dwell, fov_cm)
    crush = 1.5 * matrix
    center = matrix // 2
    meta = {
        "kind": "se",
        "matrix": matrix,
        "fov_cm": fov_cm,
        "esp_ms": esp_ms,
        "R": 1,
        "tes_ms": [float(te_ms)],
        "tr_ms": float(tr_ms),
        "echo_offsets": [(0, 0)],
        "refocus_ms": te_ms / 2.0,
        "dwell_ms": dwell,
        "readout": readout,
    }

    def shot_head(t0):
        return (
            [Event("RF", t0, flip_deg=90.0, phase_deg=0.0, role="excitation")]
            + _grad("RO", crush, t0 + te_ms / 2 - crusher_ms, crusher_ms, fov_cm, "crusher")
            + [Event("RF", t0 + te_ms / 2, flip_deg=180.0, phase_deg=90.0, role="refocusing")]
            + _grad("RO", crush, t0 + te_ms / 2, crusher_ms, fov_cm, "crusher")
        )

    events: list[Event] = []
    t_pre = te_ms / 2 + crusher_ms
    if readout == "segmented":
        t_start = te_ms - (center + 0.5) * dwell
        if t_start < t_pre + prephase_ms - _TIME_EPS or tr_ms < t_start + t_lobe:
            raise InvalidTiming("TE/TR too short for a segmented spin echo")
        for line in range(matrix):
            t0 = line * tr_ms
            events += shot_head(t0)
            events += _prephasers(matrix, t0 + t_pre, prephase_ms, fov_cm, ky_start=line - center)
            events.append(Event("Gradient", t0 + t_start, t_lobe, axis="RO", amplitude=g_ro, tag="readout"))
            events.append(
                Event("ADC", t0 + t_start, t_lobe, num_samples=matrix, dwell_ms=dwell, dest_line=line)
            )
            t_end = t0 + t_start + t_lobe
            events.append(Event("Delay", t_end, t0 + tr_ms - t_end, spoil=True))
        total = matrix * tr_ms
        meta["readout_start_ms"] = t_start
        meta["readout_duration_ms"] = t_lobe
    elif readout == "epi":
        # centre line is even when matrix % 4 == 0, so its kx = 0 sample is index `center`
        j_c = center if center % 2 == 0 else matrix - 1 - center
        t_start = te_ms - center * esp_ms - (j_c + 0.5) * dwell
        if t_start < t_pre + prephase_ms - _TIME_EPS:
            raise InvalidTiming(
                f"EPI train of {matrix} lines at ESP {esp_ms} ms cannot be centered on TE={te_ms} ms"
            )
        events += shot_head(0.0)
        events += _prephasers(matrix, t_start - prephase_ms, prephase_ms, fov_cm)
        events += build_epi_readout(matrix, esp_ms, 1, fov_cm, t_start, blip_frac)
        total = max(tr_ms, t_start + matrix * esp_ms)
        meta["readout_start_ms"] = t_start
        meta["readout_duration_ms"] = matrix * esp_ms
    else:
        raise ValueError(f"unknown readout mode {readout!r}")
    return _program(events, total, meta)


# --- moment bookkeeping ------------------------------------------------------


def _area_between(ev: Event, t0: float, t1: float, fov: float) -> float:
    lo = max(ev.t_start_ms, t0)
    hi = min(ev.t_end_ms, t1)
    if hi <= lo:
        return 0.0
    return gradient_area(ev, fov) * (hi - lo) / ev.duration_ms


def pathway_area(program: SequenceProgram, t_from: float, t_to: float) -> np.ndarray:
    """Net (kx, ky) area seen by magnetization excited at ``t_from``.

    Every refocusing pulse in between negates what has been accumulated so far.
    """
    fov = program.fov_cm
    cuts = [e.t_start_ms for e in program.rf_events() if e.role == "refocusing" and t_from < e.t_start_ms < t_to]
    bounds = [t_from, *cuts, t_to]
    acc = np.zeros(2)
    grads = program.gradients()
    for a, b in zip(bounds, bounds[1:]):
        if a != t_from:
            acc = -acc
        for g in grads:
            acc[0 if g.axis == "RO" else 1] += _area_between(g, a, b, fov)
    return acc


def trajectory(program: SequenceProgram) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample times and nominal (kx, ky) labels of every ADC sample.

    The label is where the sample is written, derived from the ADC plan
    (destination line, sample index and line reversal), not from the
    gradients.
    """
    n = program.matrix
    half = n // 2
    times, kx, ky = [], [], []
    for adc in program.adc_events():
        j = np.arange(adc.num_samples)
        col = n - 1 - j if adc.reverse else j
        times.append(adc.sample_times())
        kx.append(col - half)
        ky.append(np.full(adc.num_samples, adc.dest_line - half))
    return np.concatenate(times), np.concatenate(kx), np.concatenate(ky)


def kcenter_time(program: SequenceProgram) -> float:
    """Time of the first sample written to (kx, ky) = (0, 0)."""
    t, kx, ky = trajectory(program)
    hit = np.flatnonzero((kx == 0) & (ky == 0))
    if hit.size == 0:
        raise InvalidTiming("no ADC sample lands on the k-space center")
    return float(t[hit[0]])


def _shot_excitations(program: SequenceProgram, t_c: float) -> list[float]:
    """Excitation instants of the shot that acquires the k-space center."""
    exc = sorted(e.t_start_ms for e in program.rf_events() if e.role == "excitation" and e.t_start_ms <= t_c)
    if program.meta.get("kind") == "se":
        return exc[-1:]
    return exc


def predicted_echo_peaks(program: SequenceProgram) -> list[tuple[float, float]]:
    """k-space location of each echo, in the order of ``meta['tes_ms']``.

    Pure area bookkeeping: at the k-center sample the pathway of echo i carries
    net area -p_i, so it peaks at p_i.
    """
    t_c = kcenter_time(program)
    # echoes in ascending-TE order are excited in descending time order
    out = []
    for t in reversed(_shot_excitations(program, t_c)):
        a = -pathway_area(program, t, t_c)
        out.append((float(a[0]), float(a[1])))
    return out


def echo_peak_times(program: SequenceProgram) -> list[float]:
    """Acquisition instant of each echo's peak sample, ascending-TE order."""
    t, kx, ky = trajectory(program)
    out = []
    for px, py in predicted_echo_peaks(program):
        hit = np.flatnonzero((kx == round(px)) & (ky == round(py)))
        out.append(float(t[hit[0]]) if hit.size else float("nan"))
    return out


def effective_echo_times(program: SequenceProgram) -> list[float]:
    """Time from each echo's excitation to the acquisition of its peak sample."""
    exc = sorted(_shot_excitations(program, kcenter_time(program)), reverse=True)
    return [tp - te for tp, te in zip(echo_peak_times(program), exc)]


# --- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str  # "timing" | "coverage" | "adc_overlap" | "rf" | "echo_timing"
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}


def validate_program(p: SequenceProgram) -> ValidationReport:
    out: list[Violation] = []
    starts = [e.t_start_ms for e in p.events]
    for i, (a, b) in enumerate(zip(starts, starts[1:])):
        if b < a:
            out.append(Violation("timing", f"event {i + 1} starts at {b} before event {i} at {a}"))

    for e in p.rf_events():
        if e.duration_ms != 0:
            out.append(Violation("rf", f"RF at {e.t_start_ms} has non-zero duration"))

    adcs = sorted(p.adc_events(), key=lambda e: e.t_start_ms)
    for a, b in zip(adcs, adcs[1:]):
        if b.t_start_ms < a.t_end_ms - _TIME_EPS:
            out.append(Violation("adc_overlap", f"ADC at {b.t_start_ms} overlaps ADC at {a.t_start_ms}"))
        if a.dwell_ms <= 0:
            out.append(Violation("adc_overlap", f"ADC at {a.t_start_ms} has dwell <= 0"))

    n = p.meta.get("matrix")
    lines = [a.dest_line for a in adcs]
    if n is not None:
        counts = np.bincount([ln for ln in lines if 0 <= ln < n], minlength=n)
        for ln in sorted(set(lines)):
            if not 0 <= ln < n:
                out.append(Violation("coverage", f"ADC writes out-of-range line {ln}"))
        for ln in np.flatnonzero(counts != 1):
            out.append(Violation("coverage", f"k-line {ln} written {counts[ln]} times"))
        for a in adcs:
            if a.num_samples != n:
                out.append(Violation("coverage", f"ADC line {a.dest_line} has {a.num_samples} samples"))

    out += _echo_timing(p)
    return ValidationReport(tuple(out))


def _echo_timing(p: SequenceProgram) -> list[Violation]:
    tes = p.meta.get("tes_ms")
    if not tes:
        return []
    tol = float(p.meta.get("dwell_ms", 0.0)) + _TIME_EPS
    rfs = p.rf_events()
    out = []
    if p.meta.get("kind") == "se":
        # first shot is representative; all shots share relative timing
        exc = [e for e in rfs if e.role == "excitation"]
        ref = [e for e in rfs if e.role == "refocusing"]
        if not exc or not ref:
            return [Violation("echo_timing", "spin echo needs an excitation and a refocusing pulse")]
        se = 2 * ref[0].t_start_ms - exc[0].t_start_ms
        if abs(se - exc[0].t_start_ms - tes[0]) > tol:
            out.append(Violation("echo_timing", f"spin echo at {se} does not match TE {tes[0]}"))
        t_c = kcenter_time(p)
        shot = exc[np.searchsorted([e.t_start_ms for e in exc], t_c, side="right") - 1]
        if abs(t_c - shot.t_start_ms - tes[0]) > tol:
            out.append(Violation("echo_timing", f"k-center sampled at {t_c}, not at TE {tes[0]}"))
        return out

    exc = sorted((e.t_start_ms for e in rfs if e.role == "excitation"), reverse=True)
    ref = [e.t_start_ms for e in rfs if e.role == "refocusing"]
    if len(exc) != len(tes) or len(ref) != 1:
        return [Violation("echo_timing", f"{len(exc)} excitations / {len(ref)} refocusing for {len(tes)} TEs")]
    t_ref = ref[0]
    t0 = float(p.meta.get("readout_start_ms", -math.inf))
    t1 = t0 + float(p.meta.get("readout_duration_ms", math.inf))
    for te, t_exc in zip(tes, exc):
        echo = 2 * t_ref - t_exc
        if abs(echo - t_exc - te) > tol:
            out.append(
                Violation("echo_timing", f"echo excited at {t_exc} forms at TE {echo - t_exc}, declared {te}")
            )
        if not t0 - tol <= echo <= t1 + tol:
            out.append(Violation("echo_timing", f"echo at {echo} outside readout window"))
    return out


def with_meta(program: SequenceProgram, **updates) -> SequenceProgram:
    meta = dict(program.meta)
    meta.update(updates)
    return replace(program, meta=meta)


def scale_events(program: SequenceProgram, factors: dict[int, float]) -> SequenceProgram:
    """Copy of ``program`` with event ``i`` amplitude scaled by ``factors[i]``."""
    events = list(program.events)
    for i, f in factors.items():
        events[i] = replace(events[i], amplitude=events[i].amplitude * f)
    return replace(program, events=tuple(events))


def single_echo_program(program: SequenceProgram, echo: int) -> SequenceProgram:
    """Copy of a multi-echo program where only the excitation of ``echo``
    (index into ``meta['tes_ms']``) tips magnetization; the others get flip 0."""
    exc = sorted(
        (i for i, e in enumerate(program.events) if e.kind == "RF" and e.role == "excitation"),
        key=lambda i: -program.events[i].t_start_ms,
    )
    if not 0 <= echo < len(exc):
        raise IndexError(f"echo {echo} out of range for {len(exc)} excitations")
    events = list(program.events)
    for k, i in enumerate(exc):
        if k != echo:
            events[i] = replace(events[i], flip_deg=0.0)
    return replace(program, events=tuple(events))
