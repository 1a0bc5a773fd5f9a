"""Two-round list AMP.

Round 1 is plain AMP-MMSE.  A selector (a genie that knows the truth, or the
trained FAL network) names one suspicious device, round 2 reruns AMP from
scratch with that device pinned to zero, and the candidate with the smaller
residual ``||y - P x||^2`` is kept.

Device indices are 0-based; list branches are numbered 1 (round 1) and 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .amp import initial_tau_sq, iterate_amp, run_amp
from .falnet import FalNetParams, forward, preprocess_features
from .sysmodel import ExperimentConfig, GroundTruth, Observation, PilotMatrix

__all__ = [
    "ListResult",
    "ModelMismatchError",
    "genie_select",
    "dnn_select",
    "lmse_select",
    "run_ga_lamp",
    "run_dl_lamp",
    "check_compatible",
    "residual_energy",
    "genie_select_batch",
    "dnn_select_batch",
    "second_round_batch",
]


class ModelMismatchError(ValueError):
    """The FAL network was trained for a different scenario."""


@dataclass(frozen=True, eq=False)
class ListResult:
    first_estimate: np.ndarray
    second_estimate: np.ndarray
    suspicious_index: int
    final_estimate: np.ndarray
    chosen_branch: int
    degenerate: bool = False  # genie saw no inactive device


def residual_energy(y, A, x) -> np.ndarray:
    """``||y - A x||^2`` over leading batch axes."""
    A = np.asarray(A)
    if A.ndim == 2:
        r = np.asarray(y) - np.asarray(x) @ A.T
    else:
        r = np.asarray(y) - np.matmul(A, np.asarray(x)[..., None])[..., 0]
    return np.sum(r.real ** 2 + r.imag ** 2, axis=-1)


def genie_select_batch(x_hat1, signal, activity) -> np.ndarray:
    err = np.abs(np.asarray(x_hat1) - signal) ** 2
    b = np.where(np.asarray(activity) == 0, err, 0.0)
    return np.argmax(b, axis=-1)  # first maximum: lowest index on ties


def genie_select(x_hat1, truth: GroundTruth) -> int:
    """Index of the inactive device with the largest round-1 error."""
    x_hat1 = np.asarray(x_hat1)
    if x_hat1.shape != truth.signal.shape:
        raise ValueError("estimate and ground truth lengths disagree")
    return int(genie_select_batch(x_hat1, truth.signal, truth.activity))


def dnn_select_batch(net: FalNetParams, Y, X1, rho: float) -> np.ndarray:
    scores = forward(net, preprocess_features(Y, X1, rho))
    return np.argmax(np.atleast_2d(scores), axis=-1).reshape(np.shape(Y)[:-1])


def dnn_select(net: FalNetParams, y: Observation, x_hat1, rho: float) -> int:
    return int(dnn_select_batch(net, y.received, np.asarray(x_hat1), rho))


def lmse_select(y: Observation, P: PilotMatrix, candidates: Sequence) -> Tuple[np.ndarray, int]:
    """Candidate with the smallest residual; returns ``(estimate, branch)`` with 1-based branch."""
    if not len(candidates):
        raise ValueError("need at least one candidate")
    best, best_e = 0, np.inf
    for i, c in enumerate(candidates):
        e = residual_energy(y.received, P.entries, c)
        if e < best_e:
            best, best_e = i, e
    return candidates[best], best + 1


def _finish(P, y, x1, s, cfg, iterations, degenerate=False) -> ListResult:
    x2 = run_amp(P, y, cfg, iterations, constraint=s)[-1].estimate
    final, branch = lmse_select(y, P, [x1, x2])
    return ListResult(x1, x2, s, final, branch, degenerate)


def run_ga_lamp(P: PilotMatrix, y: Observation, truth: GroundTruth, cfg: ExperimentConfig,
                iterations: int) -> ListResult:
    """List AMP with the genie selector (upper reference for the trained network)."""
    x1 = run_amp(P, y, cfg, iterations)[-1].estimate
    s = genie_select(x1, truth)
    return _finish(P, y, x1, s, cfg, iterations, degenerate=truth.n_active == cfg.n_devices)


def check_compatible(net: FalNetParams, cfg: ExperimentConfig) -> None:
    """Raise :class:`ModelMismatchError` unless ``net`` was trained for ``cfg``'s scenario."""
    want = cfg.scenario()
    got = net.metadata.get("scenario")
    if got is None:
        raise ModelMismatchError("model carries no scenario metadata")
    diff = sorted(k for k in want if got.get(k) != want[k])
    if diff:
        pairs = ", ".join(f"{k}: model={got.get(k)!r} config={want[k]!r}" for k in diff)
        raise ModelMismatchError(f"model/config mismatch ({pairs})")


def run_dl_lamp(net: FalNetParams, P: PilotMatrix, y: Observation, cfg: ExperimentConfig,
                iterations: int, check: bool = True) -> ListResult:
    if check:
        check_compatible(net, cfg)
    x1 = run_amp(P, y, cfg, iterations)[-1].estimate
    s = dnn_select(net, y, x1, cfg.activity_prob)
    return _finish(P, y, x1, s, cfg, iterations)


def second_round_batch(A, Y, X1, s, cfg: ExperimentConfig, iterations: int):
    """Constrained round 2 and LMSE choice for a batch of trials.

    Returns ``(final, branch)`` where branch is 1 or 2 per trial.
    """
    for _, X2, _, _ in iterate_amp(A, Y, cfg.activity_prob, cfg.channel_var,
                                   initial_tau_sq(cfg), iterations, constraint=s):
        pass
    e1 = residual_energy(Y, A, X1)
    e2 = residual_energy(Y, A, X2)
    take2 = e2 < e1
    return np.where(take2[..., None], X2, X1), np.where(take2, 2, 1)
