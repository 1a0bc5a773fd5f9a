"""Estimation and detection metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

__all__ = [
    "DetectionOutcome",
    "nmse_linear",
    "nmse_db",
    "detect_fixed_threshold",
    "pf_pm",
    "pf_pm_batch",
    "roc_sweep",
]


@dataclass(frozen=True)
class DetectionOutcome:
    """Per-trial false-alarm / missed-detection rates; NaN when undefined."""

    pf: float
    pm: float
    n_inactive: int
    n_active: int


def nmse_linear(x_hat, x):
    """``||x_hat - x||^2 / ||x||^2`` (vectorised over leading axes)."""
    x_hat, x = np.asarray(x_hat), np.asarray(x)
    den = np.sum(np.abs(x) ** 2, axis=-1)
    if np.any(den == 0):
        raise ValueError("NMSE undefined for an all-zero signal; exclude K = 0 trials")
    out = np.sum(np.abs(x_hat - x) ** 2, axis=-1) / den
    return out if np.ndim(out) else float(out)


def nmse_db(per_trial) -> float:
    """10 log10 of the trial-average of linear NMSE values."""
    return float(10.0 * np.log10(np.mean(per_trial)))


def detect_fixed_threshold(x_hat, delta: float) -> np.ndarray:
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return (np.abs(np.asarray(x_hat)) > delta).astype(np.int8)


def pf_pm_batch(a_hat, a):
    """Arrays of P_f and P_m over leading axes; NaN where a denominator is zero."""
    a_hat = np.asarray(a_hat).astype(bool)
    a = np.asarray(a).astype(bool)
    if a_hat.shape != a.shape:
        raise ValueError("shape mismatch")
    n_in = np.sum(~a, axis=-1)
    n_act = np.sum(a, axis=-1)
    fa = np.sum(a_hat & ~a, axis=-1)
    md = np.sum(~a_hat & a, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        pf = np.where(n_in > 0, fa / np.maximum(n_in, 1), np.nan)
        pm = np.where(n_act > 0, md / np.maximum(n_act, 1), np.nan)
    return pf, pm, n_in, n_act


def pf_pm(a_hat, a) -> DetectionOutcome:
    pf, pm, n_in, n_act = pf_pm_batch(a_hat, a)
    return DetectionOutcome(float(pf), float(pm), int(n_in), int(n_act))


def roc_sweep(estimates, activities, thresholds: Sequence[float]) -> List[Tuple[float, float, float]]:
    """Mean ``(P_f, P_m)`` over trials for each magnitude threshold.

    ``estimates`` and ``activities`` are ``(trials, N)``.  Undefined per-trial
    rates are left out of the corresponding mean.
    """
    if not len(thresholds):
        raise ValueError("need at least one threshold")
    mags = np.abs(np.atleast_2d(estimates))
    act = np.atleast_2d(activities)
    if mags.shape != act.shape or mags.shape[0] == 0:
        raise ValueError("estimates and activities must be (trials, N) with trials >= 1")
    rows = []
    for delta in thresholds:
        pf, pm, _, _ = pf_pm_batch(detect_fixed_threshold(mags, delta), act)
        rows.append((float(delta), _nanmean(pf), _nanmean(pm)))
    return rows


def _nanmean(v):
    v = v[~np.isnan(v)]
    return float(v.mean()) if v.size else float("nan")
