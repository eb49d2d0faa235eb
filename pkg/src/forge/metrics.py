"""Image quality and regression metrics."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import DegenerateInput, DimMismatch, EmptyROI, ZeroReference


def metric_nrmse(pred, ref) -> float:
    """Normalized RMSE in percent: 100 * ||pred - ref|| / ||ref||."""
    pred = np.asarray(pred)
    ref = np.asarray(ref)
    if pred.shape != ref.shape:
        raise DimMismatch(f"{pred.shape} vs {ref.shape}")
    denom = np.linalg.norm(ref.ravel())
    if denom == 0:
        raise ZeroReference("reference image has zero norm")
    return float(100.0 * np.linalg.norm((pred - ref).ravel()) / denom)


def _roi_mask(roi, shape) -> np.ndarray:
    if isinstance(roi, np.ndarray) and roi.dtype == bool:
        if roi.shape != shape:
            raise DimMismatch(f"ROI {roi.shape} vs image {shape}")
        return roi
    m = np.zeros(shape, dtype=bool)
    m[roi] = True
    return m


def ghost_roi(signal_roi, shape) -> np.ndarray:
    """The signal ROI shifted by half the FOV along the phase-encode (row) axis."""
    return np.roll(_roi_mask(signal_roi, shape), shape[0] // 2, axis=0)


def metric_gsr(img, signal_roi, ghost=None) -> float:
    """Ghost-to-signal ratio: mean |img| over the ghost ROI divided by mean
    |img| over the signal ROI.

    ROIs are boolean masks or index expressions (e.g. a tuple of slices). The
    ghost ROI defaults to the signal ROI shifted by half the FOV along PE.
    """
    mag = np.abs(np.asarray(img))
    sig = _roi_mask(signal_roi, mag.shape)
    gh = ghost_roi(sig, mag.shape) if ghost is None else _roi_mask(ghost, mag.shape)
    if not sig.any() or not gh.any():
        raise EmptyROI("signal and ghost ROIs must be non-empty")
    if (sig & gh).any():
        raise ValueError("signal and ghost ROIs overlap")
    s = mag[sig].mean()
    if s == 0:
        raise ZeroReference("signal ROI has zero mean magnitude")
    return float(mag[gh].mean() / s)


def metric_linreg(x, y) -> tuple[float, float, float]:
    """Ordinary least squares fit ``y = slope*x + intercept``; returns
    (slope, intercept, r2)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DimMismatch(f"{x.size} vs {y.size} points")
    if x.size < 3:
        raise DegenerateInput("need at least three points")
    if np.ptp(x) == 0:
        raise DegenerateInput("x values have zero variance")
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    slope = ((x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    sst = ((y - ym) ** 2).sum()
    if sst == 0:
        return float(slope), float(intercept), 1.0
    r2 = 1.0 - ((y - (slope * x + intercept)) ** 2).sum() / sst
    return float(slope), float(intercept), float(min(max(r2, 0.0), 1.0))


def write_metrics_csv(path, rows: list[dict]) -> None:
    """One row per sample; columns are the union of keys in first-seen order."""
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)
