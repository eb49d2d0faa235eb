"""Compiled isochromat kernel.

Rigid motion keeps each spin's position affine in its reference coordinates,
so the precession phase over any step is ``A*x0 + B*y0 + C`` with per-step
coefficients shared by all spins. Phase between two instants is a difference
of cumulative sums, and spins only need visiting at RF pulses, spoilers and
ADC samples.
"""

from __future__ import annotations

import math
import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np  # noqa: E402
from numba import njit, prange  # noqa: E402

ACT_SAMPLE = 0
ACT_RF = 1
ACT_SPOIL = 2

CHUNK = 1024


@njit(cache=True, parallel=True)
def run_spins(
    x0, y0, m0, r1, r2, b1,
    cum_a, cum_b, cum_c, step_t,
    act_kind, act_step, act_p0, act_p1, act_out,
    n_out,
):  # pragma: no cover - compiled
    n_spins = x0.shape[0]
    n_chunks = (n_spins + CHUNK - 1) // CHUNK
    partial = np.zeros((n_chunks, n_out), dtype=np.complex128)
    n_act = act_kind.shape[0]
    for c in prange(n_chunks):
        lo = c * CHUNK
        hi = min(lo + CHUNK, n_spins)
        for s in range(lo, hi):
            x = x0[s]
            y = y0[s]
            eq = m0[s]
            mxy = 0.0 + 0.0j
            mz = eq
            seg = 0
            seg_t = step_t[0]
            for k in range(n_act):
                st = act_step[k]
                kind = act_kind[k]
                if kind == 0 and mxy == 0.0:
                    continue
                dt = step_t[st] - seg_t
                phi = x * (cum_a[st] - cum_a[seg]) + y * (cum_b[st] - cum_b[seg]) + (cum_c[st] - cum_c[seg])
                if dt > 0.0:
                    dec = math.exp(-dt * r2[s])
                else:
                    dec = 1.0
                cp = math.cos(phi) * dec
                sp = math.sin(phi) * dec
                # mxy * exp(-i phi) * dec
                re = mxy.real * cp + mxy.imag * sp
                im = mxy.imag * cp - mxy.real * sp
                if kind == 0:
                    partial[c, act_out[k]] += complex(re, im)
                    continue
                mxy = complex(re, im)
                if dt > 0.0:
                    mz = eq + (mz - eq) * math.exp(-dt * r1[s])
                seg = st
                seg_t = step_t[st]
                if kind == 2:
                    mxy = 0.0 + 0.0j
                    continue
                theta = act_p0[k] * b1[s]
                nx = math.cos(act_p1[k])
                ny = math.sin(act_p1[k])
                ct = math.cos(theta)
                sn = math.sin(theta)
                vx = mxy.real
                vy = mxy.imag
                vz = mz
                dot = (nx * vx + ny * vy) * (1.0 - ct)
                # rotation by -theta about (nx, ny, 0): z tips toward +y for phase 0
                cx = ny * vz
                cy = -nx * vz
                cz = nx * vy - ny * vx
                wx = vx * ct - cx * sn + nx * dot
                wy = vy * ct - cy * sn + ny * dot
                wz = vz * ct - cz * sn
                mxy = wx + 1j * wy
                mz = wz
    return partial
