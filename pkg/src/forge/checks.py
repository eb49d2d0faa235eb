"""Invariant and oracle checks behind ``forge validate``.

Each check returns ``(ok, detail)``. The ``analytic`` suite runs on small
grids in well under a minute; ``full`` adds dataset determinism.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import container
from .bloch import reconstruct, simulate, simulate_reference
from .fields import B1FieldSpec, MotionSpec, NonIdealSet, b1_delta, gen_b1, gen_velocity_field, pixel_coords
from .metrics import metric_gsr, metric_linreg
from .mriops import SamplingMask, apply_mask, fft2c, ifft2c
from .phantom import ParametricMap, ParametricTemplateSet
from .randomize import RandomizationBounds, sample_config
from .sequence import GAMMA, Event, SequenceProgram, build_se, build_se_moled, predicted_echo_peaks, validate_program


def uniform_templates(size: int, m0: float = 1.0, t2_ms: float = 100.0, t1_ms: float = 2000.0) -> ParametricTemplateSet:
    return ParametricTemplateSet(
        ParametricMap("M0", np.full((size, size), m0)),
        ParametricMap("T2", np.full((size, size), t2_ms)),
        t1_fixed_ms=t1_ms,
        provenance="uniform",
    )


def gradient_probe(g_ro: float, g_pe: float, t_ms: float, fov_cm: float) -> SequenceProgram:
    """90 deg excitation, constant gradients for ``t_ms``, one sample at ``t_ms``."""
    dwell = 1e-6
    events = (
        Event("RF", 0.0, 0.0, flip_deg=90.0, phase_deg=0.0, role="excitation"),
        Event("Gradient", 0.0, t_ms, axis="RO", amplitude=g_ro, tag="probe"),
        Event("Gradient", 0.0, t_ms, axis="PE", amplitude=g_pe, tag="probe"),
        Event("ADC", t_ms - 0.5 * dwell, dwell, num_samples=1, dwell_ms=dwell, dest_line=0),
    )
    return SequenceProgram(events, t_ms, {"kind": "probe", "matrix": 1, "fov_cm": fov_cm})


def probe_phase(g_ro: float, g_pe: float, v_ro: float, v_pe: float, t_ms: float, fov_cm: float) -> tuple[float, float]:
    """Simulated and closed-form motion phase for the single spin at the
    right-hand pixel of a 1x2 grid (x0 = fov/4, y0 = 0).

    The motion phase is the signal phase difference between moving and static
    runs; the closed form is gamma * (G_ro v_ro + G_pe v_pe) * t**2 / 2.
    """
    tset = ParametricTemplateSet(
        ParametricMap("M0", np.array([[0.0, 1.0]])),
        ParametricMap("T2", np.array([[1e9, 1e9]])),
        t1_fixed_ms=1e9,
    )
    prog = gradient_probe(g_ro, g_pe, t_ms, fov_cm)
    moving = NonIdealSet(motion=MotionSpec(v_ro, v_pe, 0.0))
    s_move = simulate(prog, tset, moving).data[0, 0]
    s_static = simulate(prog, tset).data[0, 0]
    sim = float(np.angle(s_static / s_move))
    exact = GAMMA * (g_ro * v_ro + g_pe * v_pe) * 1e-3 * t_ms**2 / 2.0
    return sim, exact


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


# --- individual checks ---------------------------------------------------------


def check_se_oracle(size: int = 32, matrix: int = 32, tes=(35.0, 50.0, 70.0, 90.0)):
    means = []
    for te in tes:
        prog = build_se(te, 20000.0, matrix=matrix, fov_cm=22.0, esp_ms=0.93)
        img = reconstruct(simulate(prog, uniform_templates(size)))
        means.append(float(np.abs(img).mean()))
    expected = np.exp(-np.asarray(tes) / 100.0)
    err = float(np.max(np.abs(np.asarray(means) / expected - 1)))
    slope, _, _ = metric_linreg(tes, np.log(means))
    t2 = -1.0 / slope
    ok = err < 0.01 and abs(t2 / 100.0 - 1) < 0.02
    return ok, f"max rel err {err:.2e}, fitted T2 {t2:.3f} ms"


def check_moled_peaks(size: int = 64, matrix: int = 32, esp_ms: float = 1.86):
    prog = build_se_moled(matrix=matrix, fov_cm=22.0, esp_ms=esp_ms)
    mag = np.abs(simulate(prog, uniform_templates(size)).data)
    predicted = predicted_echo_peaks(prog)
    c = matrix // 2
    worst = 0.0
    for kx, ky in predicted:
        r, q = int(round(ky)) + c, int(round(kx)) + c
        win = mag[max(r - 2, 0) : r + 3, max(q - 2, 0) : q + 3]
        pr, pq = np.unravel_index(np.argmax(win), win.shape)
        worst = max(worst, math.hypot(pr + max(r - 2, 0) - r, pq + max(q - 2, 0) - q))
    # the four peaks must also be the four largest samples
    top = np.sort(mag.ravel())[-5:]
    ok = worst <= 1.0 and len(predicted) == 4 and top[0] < 0.5 * top[1]
    return ok, f"max peak offset {worst:.1f} k-index, {len(predicted)} echoes"


def check_motion_phase(cases: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        g = rng.uniform(-10, 10, 2)
        v = rng.uniform(-10, 10, 2)
        t = rng.uniform(0.5, 10)
        sim, exact = probe_phase(g[0], g[1], v[0], v[1], t, 22.0)
        worst = max(worst, abs(_wrap(sim - exact)))
    return worst < 1e-6, f"max |dphi| {worst:.2e} rad over {cases} cases"


def check_motion_neutral(size: int = 32, matrix: int = 16):
    prog = build_se_moled(matrix=matrix, fov_cm=22.0, esp_ms=3.72)
    t = uniform_templates(size)
    a = simulate(prog, t, NonIdealSet(motion=MotionSpec(0, 0, 0))).data
    b = simulate(prog, t, NonIdealSet(motion=MotionSpec(enabled=False))).data
    return a.tobytes() == b.tobytes(), "zero motion vs disabled: bitwise comparison"


def check_fft(seed: int = 0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
    y = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
    adj = abs(np.vdot(fft2c(x), y) - np.vdot(x, ifft2c(y)))
    pars = abs(np.linalg.norm(fft2c(x)) - np.linalg.norm(x))
    return max(adj, pars) < 1e-10, f"adjoint {adj:.1e}, Parseval {pars:.1e}"


def check_mask(seed: int = 0):
    rng = np.random.default_rng(seed)
    k = rng.standard_normal((8, 32, 32)) + 1j * rng.standard_normal((8, 32, 32))
    m = SamplingMask.uniform(32, 2)
    once = apply_mask(k, m)
    twice = apply_mask(once, m)
    return np.array_equal(once, twice), "mask applied twice equals mask applied once"


def check_gsr_zero_fill(size: int = 64):
    img = np.zeros((size, size))
    q = size // 4
    img[q + 4 : 3 * q - 4, q : 3 * q] = 1.0
    sig = np.zeros_like(img, dtype=bool)
    sig[q + 4 : 2 * q, q : 3 * q] = True
    ghost = np.roll(sig, size // 2, axis=0)
    full = metric_gsr(img, sig, ghost)
    zf = np.abs(ifft2c(apply_mask(fft2c(img), SamplingMask.uniform(size, 2))))
    under = metric_gsr(zf, sig, ghost)
    return under > 10 * max(full, 1e-12), f"GSR full {full:.3g}, R=2 zero-fill {under:.3g}"


def check_velocity(cases: int = 100, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        m = MotionSpec(*rng.uniform(-10, 10, 2), rng.uniform(-50, 50))
        v = gen_velocity_field(m, 32, 24, 22.0)
        x, y = pixel_coords(32, 24, 22.0)
        w = math.radians(m.omega)
        worst = max(
            worst,
            float(np.abs(v.v_ro_field - (-w * y + m.v_ro)).max()),
            float(np.abs(v.v_pe_field - (w * x + m.v_pe)).max()),
        )
    return worst <= 1e-12, f"max deviation {worst:.1e}"


def check_b1(cases: int = 50, seed: int = 0):
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(cases):
        b = gen_b1(B1FieldSpec.random(rng), 32, 32)
        ok &= b.min() == 0.7 and b.max() == 1.2
    spec = B1FieldSpec(np.array([[0, 0, 0], [0, 1.0, 0], [0, 0, 0]]))
    val = float(b1_delta(spec, np.array(0.5), np.array(0.5)))
    return bool(ok and abs(val - 0.25) < 1e-12), f"bounds exact over {cases} maps; dB(0.5,0.5)={val:g}"


def check_randomization(draws: int = 2000, seed: int = 0):
    b = RandomizationBounds()
    ok = True
    for i in range(draws):
        d = sample_config(b, seed, i)
        ok &= b.v_ro[0] <= d.v_ro <= b.v_ro[1] and b.v_pe[0] <= d.v_pe <= b.v_pe[1]
        ok &= b.omega[0] <= d.omega <= b.omega[1] and b.t2_scale[0] <= d.t2_scale <= b.t2_scale[1]
        ok &= d.snr_db == math.inf or b.snr_db[0] <= d.snr_db <= b.snr_finite_max
    return bool(ok), f"{draws} draws inside bounds"


def check_container(seed: int = 0):
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))).astype(np.complex64)
    y, hdr = container.decode(container.encode(x, "complex64", meta={"a": 1}))
    return y.tobytes() == x.tobytes() and hdr["byte_order"] == "little", "complex64 round trip"


def check_programs():
    bad = []
    for prog in (build_se_moled(), build_se(50.0, 3000.0)):
        rep = validate_program(prog)
        if not rep.ok:
            bad.append(f"{prog.meta['kind']}: {rep.codes()}")
    return not bad, "; ".join(bad) or "default SE-MOLED and SE programs valid"


def check_reference_agreement(size: int = 8, matrix: int = 8):
    prog = build_se_moled(matrix=matrix, fov_cm=22.0, esp_ms=7.44)
    t = uniform_templates(size)
    ni = NonIdealSet(motion=MotionSpec(-8, -5, -32))
    a = simulate(prog, t, ni).data
    b = simulate_reference(prog, t, ni, check_norm=True).data
    err = float(np.abs(a - b).max())
    return err < 1e-9, f"kernel vs step-by-step max |diff| {err:.1e}"


def check_dataset_determinism():
    from .dataset import dataset_digest, gen_dataset

    digests = []
    with tempfile.TemporaryDirectory() as tmp:
        for run, workers in enumerate((1, 2)):
            gen_dataset("Dm", {"spin_size": 32, "matrix": 16, "esp_ms": 3.72, "label_size": 16, "source_size": 32},
                        2, 7, f"{tmp}/{run}", workers=workers)
            digests.append(dataset_digest(f"{tmp}/{run}"))
    return digests[0] == digests[1], f"sha256 {digests[0][:12]} vs {digests[1][:12]}"


@dataclass
class Check:
    name: str
    fn: Callable


ANALYTIC = [
    Check("spin-echo oracle", check_se_oracle),
    Check("MOLED echo geometry", check_moled_peaks),
    Check("motion phase closed form", check_motion_phase),
    Check("motion neutrality", check_motion_neutral),
    Check("kernel vs reference", check_reference_agreement),
    Check("fft adjoint/Parseval", check_fft),
    Check("mask idempotence", check_mask),
    Check("zero-fill GSR", check_gsr_zero_fill),
    Check("velocity fields", check_velocity),
    Check("B1 maps", check_b1),
    Check("randomization bounds", check_randomization),
    Check("MSD container", check_container),
    Check("program validation", check_programs),
]

SUITES = {
    "analytic": ANALYTIC,
    "full": ANALYTIC + [Check("dataset determinism", check_dataset_determinism)],
}


def run_suite(name: str = "analytic", out=print) -> bool:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    all_ok = True
    width = max(len(c.name) for c in SUITES[name])
    for c in SUITES[name]:
        t0 = time.perf_counter()
        try:
            ok, detail = c.fn()
        except Exception as exc:  # report, do not abort the table
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {c.name:<{width}}  {time.perf_counter() - t0:6.2f}s  {detail}")
    return all_ok
