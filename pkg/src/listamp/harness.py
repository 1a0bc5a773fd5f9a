"""Monte-Carlo experiment drivers and file formats.

Trials are drawn one generator per trial (see :mod:`listamp.sysmodel`) and then
pushed through the batched AMP kernel in chunks, so results depend only on the
master seed and never on the chunk size.
"""
from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ._container import FormatError, read_container, write_container
from .amp import initial_tau_sq, iterate_amp
from .falnet import FalNetParams, make_labels, preprocess_features
from .metrics import nmse_linear, roc_sweep
from .pipeline import check_compatible, dnn_select_batch, genie_select_batch, second_round_batch
from .sysmodel import ExperimentConfig, draw_trial, fixed_pilots

__all__ = [
    "ALGORITHMS",
    "TrialBatch",
    "ExperimentSpec",
    "draw_batch",
    "iter_batches",
    "monte_carlo_nmse",
    "roc_curve",
    "generate_dataset",
    "write_dataset",
    "read_dataset",
    "parse_config_text",
    "load_config_file",
    "format_csv",
    "default_thresholds",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("amp-mmse", "ga-lamp", "dl-lamp")
DATASET_AMP_ITERATIONS = 20
_DATA_MAGIC = b"LAMPDAT\x00"


@dataclass
class TrialBatch:
    pilots: np.ndarray  # (M, N) when fixed, else (B, M, N)
    received: np.ndarray  # (B, M)
    signal: np.ndarray  # (B, N)
    activity: np.ndarray  # (B, N)

    def __len__(self):
        return len(self.received)

    def subset(self, keep) -> "TrialBatch":
        p = self.pilots if self.pilots.ndim == 2 else self.pilots[keep]
        return TrialBatch(p, self.received[keep], self.signal[keep], self.activity[keep])


def draw_batch(cfg: ExperimentConfig, start: int, count: int, pilots=None) -> TrialBatch:
    """Trials ``start .. start+count-1``; ``pilots`` is the fixed matrix, if any."""
    Ps, ys, xs, acts = [], [], [], []
    for k in range(start, start + count):
        P, truth, obs = draw_trial(cfg, k, pilots)
        if pilots is None:
            Ps.append(P.entries)
        ys.append(obs.received)
        xs.append(truth.signal)
        acts.append(truth.activity)
    A = pilots.entries if pilots is not None else np.stack(Ps)
    return TrialBatch(A, np.stack(ys), np.stack(xs), np.stack(acts))


def iter_batches(cfg: ExperimentConfig, trials: int, chunk: int = 500):
    pilots = fixed_pilots(cfg)
    for start in range(0, trials, chunk):
        yield draw_batch(cfg, start, min(chunk, trials - start), pilots)


@dataclass
class ExperimentSpec:
    config: ExperimentConfig
    algorithm: str = "amp-mmse"
    iterations: List[int] = field(default_factory=lambda: [3, 5, 10, 20])
    trials: int = 10_000
    model_path: Optional[str] = None
    output_path: Optional[str] = None
    genie: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.iterations or min(self.iterations) < 1:
            raise ValueError("iterations must be positive")
        if self.algorithm == "dl-lamp" and not self.genie and not self.model_path:
            raise ValueError("dl-lamp requires a model (or the genie selector)")


def _round_one(batch: TrialBatch, cfg, iterations: Sequence[int]) -> Dict[int, np.ndarray]:
    want = set(iterations)
    out = {}
    for t, x, _, _ in iterate_amp(batch.pilots, batch.received, cfg.activity_prob,
                                  cfg.channel_var, initial_tau_sq(cfg), max(want)):
        if t in want:
            out[t] = x.copy()
    return out


def _final_estimates(batch, cfg, algorithm, iterations, net=None, genie=False):
    """``{t: (B, N) final estimate}`` for every requested iteration count."""
    first = _round_one(batch, cfg, iterations)
    if algorithm == "amp-mmse":
        return first
    out = {}
    for t, x1 in first.items():
        if algorithm == "ga-lamp" or genie:
            s = genie_select_batch(x1, batch.signal, batch.activity)
        else:
            s = dnn_select_batch(net, batch.received, x1, cfg.activity_prob)
        out[t], _ = second_round_batch(batch.pilots, batch.received, x1, s, cfg, t)
    return out


def monte_carlo_nmse(cfg: ExperimentConfig, algorithm: str, iterations: Sequence[int],
                     trials: int, net: Optional[FalNetParams] = None, genie: bool = False,
                     chunk: int = 500) -> Dict[int, dict]:
    """Average NMSE (dB) per iteration count.

    Trials with no active device are skipped (NMSE is undefined there) and
    reported as ``skipped``.
    """
    if algorithm == "dl-lamp" and not genie:
        if net is None:
            raise ValueError("dl-lamp needs a trained network")
        check_compatible(net, cfg)
    iterations = sorted(set(iterations))
    per = {t: [] for t in iterations}
    skipped = 0
    for batch in iter_batches(cfg, trials, chunk):
        keep = batch.activity.sum(axis=1) > 0
        skipped += int((~keep).sum())
        if not keep.any():
            continue
        batch = batch.subset(keep)
        for t, est in _final_estimates(batch, cfg, algorithm, iterations, net, genie).items():
            per[t].append(nmse_linear(est, batch.signal))
    res = {}
    for t in iterations:
        vals = np.concatenate(per[t]) if per[t] else np.array([])
        res[t] = {
            "nmse_db": float(10 * np.log10(vals.mean())) if vals.size else float("nan"),
            "trials": int(vals.size),
            "skipped": skipped,
            "per_trial": vals,
        }
    return res


def default_thresholds() -> np.ndarray:
    return np.geomspace(1e-3, 1.0, 61)


def roc_curve(cfg: ExperimentConfig, algorithm: str, thresholds: Sequence[float], trials: int,
              iterations: int = 100, net: Optional[FalNetParams] = None, genie: bool = False,
              chunk: int = 500):
    """``[(delta, mean_pf, mean_pm), ...]`` on the final estimates after ``iterations``."""
    if algorithm == "dl-lamp" and not genie:
        if net is None:
            raise ValueError("dl-lamp needs a trained network")
        check_compatible(net, cfg)
    ests, acts = [], []
    for batch in iter_batches(cfg, trials, chunk):
        ests.append(_final_estimates(batch, cfg, algorithm, [iterations], net, genie)[iterations])
        acts.append(batch.activity)
    return roc_sweep(np.concatenate(ests), np.concatenate(acts), thresholds)


# --------------------------------------------------------------------------
# datasets

def generate_dataset(cfg: ExperimentConfig, trials: int,
                     amp_iterations: int = DATASET_AMP_ITERATIONS, chunk: int = 1000,
                     dtype=np.float32):
    """Features and labels from round-1 AMP outputs; returns ``(features, labels, header)``.

    Rows are stored as float32 by default (features are a binary decision plus a
    unit-variance observation, labels lie in [0, 1]), which halves the memory of
    million-row training sets.  Training promotes each batch to float64.
    """
    M, N = cfg.pilot_length, cfg.n_devices
    feats = np.empty((trials, 2 * M + N), dtype)
    labels = np.empty((trials, N), dtype)
    row = 0
    for batch in iter_batches(cfg, trials, chunk):
        x1 = _round_one(batch, cfg, [amp_iterations])[amp_iterations]
        feats[row:row + len(batch)] = preprocess_features(batch.received, x1, cfg.activity_prob)
        labels[row:row + len(batch)] = make_labels(x1, batch.signal, batch.activity)
        row += len(batch)
    return feats, labels, dataset_header(cfg, trials, amp_iterations)


def dataset_header(cfg: ExperimentConfig, rows: int, amp_iterations: int) -> dict:
    return {
        "kind": "dataset",
        "n_devices": cfg.n_devices,
        "pilot_length": cfg.pilot_length,
        "activity_prob": cfg.activity_prob,
        "snr_db": cfg.snr_db,
        "quant_bits": cfg.quant_bits,
        "seed": cfg.seed,
        "pilot_seed": cfg.pilot_seed,
        "amp_iterations": amp_iterations,
        "rows": rows,
        "scenario": cfg.scenario(),
        "config_hash": cfg.fingerprint(),
    }


def write_dataset(path, features, labels, header: dict) -> None:
    write_container(path, _DATA_MAGIC, header, [features, labels])


def read_dataset(path):
    """Return ``(features, labels, header)``; checks the widths against ``(M, N)``."""
    header, arrays = read_container(path, _DATA_MAGIC)
    if header.get("kind") != "dataset" or len(arrays) != 2:
        raise FormatError(f"{path}: not a dataset file")
    f, e = arrays
    M, N = header["pilot_length"], header["n_devices"]
    if f.shape != (header["rows"], 2 * M + N) or e.shape != (header["rows"], N):
        raise FormatError(f"{path}: array shapes {f.shape}, {e.shape} do not match "
                          f"rows={header['rows']}, M={M}, N={N}")
    return f, e, header


# --------------------------------------------------------------------------
# config files and CSV

_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def _parse_value(key, raw):
    raw = raw.strip()
    if key == "quant_bits":
        return None if raw.lower() in ("unquantized", "none") else int(raw)
    if key == "pilot_seed":
        return None if raw.lower() in ("none", "per-trial") else int(raw)
    if key in ("n_devices", "pilot_length", "seed"):
        return int(raw)
    return float(raw)


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Keys mirror :class:`ExperimentConfig`."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            out[key] = _parse_value(key, raw)
        except ValueError:
            raise ValueError(f"config line {lineno}: bad value {raw!r} for {key}") from None
    return out


def load_config_file(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else str(v)


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    if path in (None, "-"):
        print(text, end="")
        return
    with open(os.fspath(path), "w", newline="") as fh:
        fh.write(text)
