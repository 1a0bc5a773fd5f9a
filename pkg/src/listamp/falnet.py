"""False-alarm-likelihood (FAL) estimator.

A fully connected ``tanh -> tanh -> sigmoid`` network maps the normalized
observation and the hard activity decision of a first AMP round to a score in
(0, 1) per device; the arg-max is the device most likely to be a false alarm.
Written directly in numpy: forward pass, exact backpropagation of the MSE loss
and RMSProp.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._container import FormatError, read_container, write_container
from .sysmodel import GroundTruth, Observation

__all__ = [
    "FalNetParams",
    "TrainingConfig",
    "RMSPropState",
    "layer_dims",
    "init_params",
    "round_half_away",
    "activity_estimate",
    "preprocess_features",
    "make_label",
    "make_labels",
    "minmax_normalize",
    "forward",
    "mse_loss",
    "backprop_grads",
    "rmsprop_step",
    "train",
    "save_model",
    "load_model",
    "FormatError",
]

log = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "tanh", "sigmoid")
_MODEL_MAGIC = b"LAMPNET\x00"


def layer_dims(pilot_length: int, n_devices: int) -> Tuple[int, int, int, int]:
    """(2M + N, 2(M + N), 2(M + N), N)."""
    hidden = 2 * (pilot_length + n_devices)
    return (2 * pilot_length + n_devices, hidden, hidden, n_devices)


@dataclass(eq=False)
class FalNetParams:
    weights: List[np.ndarray]  # (fan_out, fan_in) per layer
    biases: List[np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) != len(ACTIVATIONS) or len(self.biases) != len(ACTIVATIONS):
            raise ValueError(f"expected {len(ACTIVATIONS)} layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: fan-in {w.shape[1]} != previous fan-out")

    @property
    def layer_dims(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def arrays(self):
        """Weights then bias of each layer, input to output."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def copy(self) -> "FalNetParams":
        return FalNetParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                            dict(self.metadata))


def init_params(dims: Sequence[int], rng: np.random.Generator, metadata=None) -> FalNetParams:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return FalNetParams(weights, biases, dict(metadata or {}))


# --------------------------------------------------------------------------
# preprocessing

def round_half_away(v: float) -> int:
    return int(np.sign(v) * np.floor(abs(v) + 0.5))


def activity_estimate(x_hat, rho: float) -> np.ndarray:
    """Mark the ``Round(rho N)`` largest ``|x_hat|`` as active.

    Ties go to the lowest index.  Vectorised over leading axes.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    mag = np.abs(np.asarray(x_hat))
    n = mag.shape[-1]
    k = round_half_away(rho * n)
    order = np.argsort(-mag, axis=-1, kind="stable")
    a_hat = np.zeros(mag.shape, dtype=np.int8)
    np.put_along_axis(a_hat, order[..., :k], 1, axis=-1)
    return a_hat


def preprocess_features(y, x_hat, rho: float) -> np.ndarray:
    """``[Re y, Im y, a_hat]`` with the 2M real scalars of y standardized jointly.

    ``y`` may be an :class:`Observation` or an array with leading batch axes.
    A constant y standardizes to zeros.
    """
    if isinstance(y, Observation):
        y = y.received
    y = np.asarray(y)
    x_hat = np.asarray(x_hat)
    if y.shape[:-1] != x_hat.shape[:-1]:
        raise ValueError("observation and estimate batch shapes disagree")
    parts = np.concatenate([y.real, y.imag], axis=-1)
    mu = parts.mean(axis=-1, keepdims=True)
    centred = parts - mu
    sd = np.sqrt(np.mean(centred ** 2, axis=-1, keepdims=True))
    with np.errstate(invalid="ignore", divide="ignore"):
        normed = np.where(sd > 0, centred / np.where(sd > 0, sd, 1.0), 0.0)
    return np.concatenate([normed, activity_estimate(x_hat, rho).astype(float)], axis=-1)


def make_labels(x_hat, signal, activity) -> np.ndarray:
    """Min-max normalized inactive-device error, vectorised over leading axes."""
    x_hat, signal, activity = np.asarray(x_hat), np.asarray(signal), np.asarray(activity)
    if x_hat.shape != signal.shape or signal.shape != activity.shape:
        raise ValueError("estimate, signal and activity shapes disagree")
    err = np.abs(x_hat - signal) ** 2
    return minmax_normalize(np.where(activity == 0, err, 0.0))


def minmax_normalize(b) -> np.ndarray:
    """``(b - min b) / (max b - min b)`` along the last axis; all-equal rows map to zeros."""
    b = np.asarray(b, float)
    lo = b.min(axis=-1, keepdims=True)
    span = b.max(axis=-1, keepdims=True) - lo
    # all-equal B carries no false-alarm signal
    return np.where(span > 0, (b - lo) / np.where(span > 0, span, 1.0), 0.0)


def make_label(x_hat, truth: GroundTruth) -> np.ndarray:
    return make_labels(x_hat, truth.signal, truth.activity)


# --------------------------------------------------------------------------
# network

def _sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_all(params: FalNetParams, f):
    acts = [f]
    h = f
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        h = np.tanh(z) if ACTIVATIONS[i] == "tanh" else _sigmoid(z)
        acts.append(h)
    return acts


def forward(params: FalNetParams, features) -> np.ndarray:
    """Network output for one feature vector or a ``(batch, features)`` array."""
    f = np.asarray(features, dtype=float)
    if f.shape[-1] != params.layer_dims[0]:
        raise ValueError(f"expected {params.layer_dims[0]} features, got {f.shape[-1]}")
    single = f.ndim == 1
    out = _forward_all(params, np.atleast_2d(f))[-1]
    return out[0] if single else out


def mse_loss(e_hat, e) -> float:
    e_hat, e = np.asarray(e_hat, float), np.asarray(e, float)
    if e_hat.shape != e.shape:
        raise ValueError("shape mismatch")
    return float(np.mean((e - e_hat) ** 2))


def backprop_grads(params: FalNetParams, features, labels):
    """Gradients of the batch-mean MSE.

    Returns ``(loss, grad_weights, grad_biases)``.
    """
    f = np.atleast_2d(np.asarray(features, float))
    e = np.atleast_2d(np.asarray(labels, float))
    if f.shape[0] == 0:
        raise ValueError("empty batch")
    acts = _forward_all(params, f)
    out = acts[-1]
    diff = out - e
    loss = float(np.mean(diff ** 2))
    delta = (2.0 / diff.size) * diff * out * (1.0 - out)
    gw, gb = [None] * 3, [None] * 3
    for i in (2, 1, 0):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ params.weights[i]) * (1.0 - acts[i] ** 2)
    return loss, gw, gb


# --------------------------------------------------------------------------
# training

@dataclass
class RMSPropState:
    acc_w: List[np.ndarray]
    acc_b: List[np.ndarray]

    @classmethod
    def zeros_like(cls, params: FalNetParams) -> "RMSPropState":
        return cls([np.zeros_like(w) for w in params.weights],
                   [np.zeros_like(b) for b in params.biases])


def _rms_update(theta, g, acc, lr, decay, eps):
    acc = decay * acc + (1.0 - decay) * g * g
    return theta - lr * g / (np.sqrt(acc) + eps), acc


def rmsprop_step(params: FalNetParams, grads, state: RMSPropState, lr: float,
                 decay: float = 0.9, eps: float = 1e-8):
    """One RMSProp update; ``grads`` is ``(grad_weights, grad_biases)``.

    Returns new ``(params, state)``; the inputs are left untouched.
    """
    gw, gb = grads
    new_w, new_b, acc_w, acc_b = [], [], [], []
    for w, g, a in zip(params.weights, gw, state.acc_w):
        w2, a2 = _rms_update(w, g, a, lr, decay, eps)
        new_w.append(w2)
        acc_w.append(a2)
    for b, g, a in zip(params.biases, gb, state.acc_b):
        b2, a2 = _rms_update(b, g, a, lr, decay, eps)
        new_b.append(b2)
        acc_b.append(a2)
    return FalNetParams(new_w, new_b, dict(params.metadata)), RMSPropState(acc_w, acc_b)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.001
    batch_size: int = 600
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    max_epochs: int = 100
    validation_fraction: float = 0.1
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


@dataclass
class TrainingHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    best_epoch: int = -1


def _subset_loss(params, f, e, idx, chunk=20000):
    tot = 0.0
    for i in range(0, len(idx), chunk):
        sel = idx[i:i + chunk]
        out = forward(params, f[sel].astype(float))
        tot += float(np.sum((out - e[sel].astype(float)) ** 2))
    return tot / (len(idx) * e.shape[1])


def train(features, labels, tcfg: TrainingConfig = TrainingConfig(), metadata=None,
          init: Optional[FalNetParams] = None):
    """Mini-batch RMSProp with early stopping on a held-out split.

    Returns ``(params, history)`` where ``params`` are the best-validation
    weights (the last weights when there is no validation split).  Batches are
    gathered by index so the dataset is never copied.
    """
    # float32 storage is accepted as is; every batch is promoted to float64
    f = np.asarray(features)
    e = np.asarray(labels)
    if f.dtype.kind != "f" or e.dtype.kind != "f":
        f, e = np.asarray(f, float), np.asarray(e, float)
    if f.ndim != 2 or e.ndim != 2 or len(f) != len(e):
        raise ValueError("features and labels must be 2-D with matching rows")
    if len(f) == 0:
        raise ValueError("empty dataset")
    two_m = f.shape[1] - e.shape[1]
    if two_m <= 0 or two_m % 2:
        raise ValueError(f"feature width {f.shape[1]} is not 2M + N for N = {e.shape[1]}")
    rng = np.random.default_rng(tcfg.seed)
    params = init.copy() if init is not None else init_params(layer_dims(two_m // 2, e.shape[1]), rng)
    params.metadata.update(metadata or {})
    params.metadata["training_seed"] = tcfg.seed

    perm = rng.permutation(len(f))
    n_val = int(round(tcfg.validation_fraction * len(f)))
    if n_val >= len(f):
        n_val = 0
    val_idx, tr_idx = np.sort(perm[:n_val]), perm[n_val:]
    if len(tr_idx) < tcfg.batch_size:
        warnings.warn(f"{len(tr_idx)} training samples is less than one batch of "
                      f"{tcfg.batch_size}; using a single smaller batch")

    state = RMSPropState.zeros_like(params)
    hist = TrainingHistory()
    best, best_loss, stale = params.copy(), np.inf, 0
    for epoch in range(tcfg.max_epochs):
        order = tr_idx[rng.permutation(len(tr_idx))]
        running = 0.0
        for start in range(0, len(order), tcfg.batch_size):
            idx = np.sort(order[start:start + tcfg.batch_size])
            loss, gw, gb = backprop_grads(params, f[idx].astype(float), e[idx].astype(float))
            params, state = rmsprop_step(params, (gw, gb), state, tcfg.learning_rate,
                                         tcfg.rms_decay, tcfg.rms_eps)
            running += loss * len(idx)
        hist.train_loss.append(running / len(tr_idx))
        if n_val:
            vl = _subset_loss(params, f, e, val_idx)
            hist.val_loss.append(vl)
            log.info("epoch %d  train %.6f  val %.6f", epoch, hist.train_loss[-1], vl)
            if vl < best_loss:
                best, best_loss, stale = params.copy(), vl, 0
                hist.best_epoch = epoch
            else:
                stale += 1
                if stale >= tcfg.patience:
                    break
        else:
            log.info("epoch %d  train %.6f", epoch, hist.train_loss[-1])
            best, hist.best_epoch = params, epoch
    return best, hist


# --------------------------------------------------------------------------
# persistence

def save_model(params: FalNetParams, path) -> None:
    header = {
        "kind": "falnet",
        "layer_dims": list(params.layer_dims),
        "activations": list(ACTIVATIONS),
        "metadata": params.metadata,
    }
    write_container(path, _MODEL_MAGIC, header, params.arrays())


def load_model(path) -> FalNetParams:
    header, arrays = read_container(path, _MODEL_MAGIC)
    if header.get("kind") != "falnet" or tuple(header.get("activations", ())) != ACTIVATIONS:
        raise FormatError(f"{path}: unsupported network description")
    dims = header["layer_dims"]
    expect = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        expect += [(fan_out, fan_in), (fan_out,)]
    if [a.shape for a in arrays] != expect:
        raise FormatError(f"{path}: blob shapes do not match layer_dims {dims}")
    return FalNetParams(arrays[0::2], arrays[1::2], header["metadata"])
