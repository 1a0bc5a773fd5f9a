"""AMP with the Bernoulli-Gaussian MMSE denoiser.

The iteration, starting from ``x = 0``, ``v = y``::

    r      = P^H v + x
    x_new  = eta(r; tau^2)              (elementwise MMSE denoiser)
    x_new[s] = 0                         (optional inactivity constraint)
    v_new  = y - P x_new + (N/M) v <eta'(r)>
    tau^2  = ||v_new||^2 / M

All array routines accept arbitrary leading batch dimensions, so a whole
Monte-Carlo run can be pushed through :func:`iterate_amp` at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

from .sysmodel import ExperimentConfig, Observation, PilotMatrix

__all__ = [
    "DenoiserParams",
    "AmpState",
    "mmse_denoise",
    "mmse_denoise_deriv",
    "empirical_tau",
    "initial_tau_sq",
    "amp_step",
    "run_amp",
    "iterate_amp",
    "state_evolution_predict",
]

# keeps the denoiser finite once the residual has vanished
_TAU_FLOOR = 1e-30


@dataclass(frozen=True)
class DenoiserParams:
    """Prior and effective-noise level for one denoising step."""

    activity_prob: float
    channel_var: float
    tau_sq: float

    def __post_init__(self):
        if not np.all(np.asarray(self.tau_sq) > 0):
            raise ValueError("tau_sq must be positive")
        if not self.channel_var > 0:
            raise ValueError("channel_var must be positive")
        if not 0.0 <= self.activity_prob <= 1.0:
            raise ValueError("activity_prob must lie in [0, 1]")

    @property
    def alpha(self):
        return self.channel_var / (self.channel_var + self.tau_sq)

    @property
    def beta(self):
        return (self.channel_var + self.tau_sq) / self.tau_sq

    @property
    def gamma(self):
        return 1.0 / self.tau_sq - 1.0 / (self.channel_var + self.tau_sq)


def _denoise(r, rho, channel_var, tau_sq, deriv):
    r = np.asarray(r)
    tau_sq = np.maximum(tau_sq, _TAU_FLOOR)
    alpha = channel_var / (channel_var + tau_sq)
    if rho == 0.0:
        z = np.zeros(np.broadcast(r, tau_sq).shape)
        return z * 0j, z
    beta = (channel_var + tau_sq) / tau_sq
    gamma = 1.0 / tau_sq - 1.0 / (channel_var + tau_sq)
    c = (1.0 - rho) / rho * beta
    mag2 = r.real ** 2 + r.imag ** 2
    # exp underflows to 0 for large |r|; the denominator then tends to 1
    ce = c * np.exp(-gamma * mag2)
    denom = 1.0 + ce
    out = alpha * r / denom
    if not deriv:
        return out, None
    slope = alpha / denom + alpha * (gamma * mag2) * ce / denom ** 2
    return out, slope


def mmse_denoise(r, params: DenoiserParams):
    """Posterior mean of ``x`` given ``r = x + CN(0, tau^2)`` under the Bernoulli-Gaussian prior."""
    out, _ = _denoise(r, params.activity_prob, params.channel_var, params.tau_sq, deriv=False)
    return out if np.ndim(out) else complex(out)


def mmse_denoise_deriv(r, params: DenoiserParams):
    """Wirtinger derivative d eta / d r (conjugate held fixed).

    Since ``eta(r) = r f(|r|^2)`` this equals ``f + |r|^2 f'``, which is real.
    """
    _, slope = _denoise(r, params.activity_prob, params.channel_var, params.tau_sq, deriv=True)
    return slope if np.ndim(slope) else float(slope)


def empirical_tau(v) -> float:
    """Effective noise estimate ``||v||^2 / M`` (vectorised over leading axes)."""
    v = np.asarray(v)
    if v.shape[-1] == 0:
        raise ValueError("residual must be non-empty")
    out = np.mean(v.real ** 2 + v.imag ** 2, axis=-1)
    return out if np.ndim(out) else float(out)


def initial_tau_sq(cfg: ExperimentConfig) -> float:
    """``sigma_z^2 + (N/M) E|x_n|^2`` with ``E|x_n|^2 = rho sigma_h^2``."""
    return cfg.noise_var + cfg.undersampling * cfg.activity_prob * cfg.channel_var


@dataclass(frozen=True, eq=False)
class AmpState:
    estimate: np.ndarray
    residual: np.ndarray
    tau_sq: float
    iteration: int = 0
    constraint: Optional[int] = None

    @classmethod
    def initial(cls, y: Observation, n_devices: int, tau_sq: float,
                constraint: Optional[int] = None) -> "AmpState":
        """The ``x = 0, v = y`` starting point."""
        return cls(np.zeros(n_devices, complex), np.array(y.received, dtype=complex),
                   float(tau_sq), 0, constraint)


def _constraint_mask(constraint, batch_shape, n):
    """Boolean mask of coordinates forced to zero, or None."""
    if constraint is None:
        return None
    s = np.asarray(constraint)
    if s.ndim == 0 and not batch_shape:
        mask = np.zeros(n, bool)
        if s >= 0:
            mask[int(s)] = True
        return mask
    s = np.broadcast_to(s, batch_shape)
    if np.any(s >= n):
        raise ValueError("constraint index out of range")
    mask = np.zeros(batch_shape + (n,), bool)
    idx = np.nonzero(s >= 0)
    mask[idx + (s[idx],)] = True
    return mask


def _hmul(A, v):
    """P^H v over leading batch dimensions."""
    if A.ndim == 2:
        return v @ A.conj()
    return np.matmul(A.conj().swapaxes(-1, -2), v[..., None])[..., 0]


def _mul(A, x):
    if A.ndim == 2:
        return x @ A.T
    return np.matmul(A, x[..., None])[..., 0]


def _step(A, y, x, v, tau_sq, rho, channel_var, mask):
    M, N = A.shape[-2:]
    r = _hmul(A, v) + x
    t = np.asarray(tau_sq)[..., None]
    x_new, slope = _denoise(r, rho, channel_var, t, deriv=True)
    if mask is not None:
        # a constant output has zero slope
        x_new = np.where(mask, 0.0, x_new)
        slope = np.where(mask, 0.0, slope)
    onsager = (N / M) * np.mean(slope, axis=-1, keepdims=True)
    v_new = y - _mul(A, x_new) + onsager * v
    return x_new, v_new, empirical_tau(v_new)


def iterate_amp(A, y, activity_prob: float, channel_var: float, tau0_sq, iterations: int,
                constraint=None) -> Iterator[tuple]:
    """Yield ``(t, x_t, v_t, tau_t^2)`` for ``t = 1..iterations``.

    ``A`` is ``(M, N)`` or ``(..., M, N)``; ``y`` is ``(..., M)``.  ``constraint``
    is None, an index, or an integer array over the batch where ``-1`` means
    unconstrained.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    A = np.asarray(A)
    y = np.asarray(y, dtype=complex)
    M, N = A.shape[-2:]
    if y.shape[-1] != M:
        raise ValueError(f"observation length {y.shape[-1]} does not match pilot length {M}")
    batch = np.broadcast_shapes(A.shape[:-2], y.shape[:-1])
    y = np.broadcast_to(y, batch + (M,))
    mask = _constraint_mask(constraint, batch, N)
    x = np.zeros(batch + (N,), complex)
    v = y.copy()
    tau_sq = np.broadcast_to(np.asarray(tau0_sq, float), batch).copy()
    for t in range(1, iterations + 1):
        x, v, tau_sq = _step(A, y, x, v, tau_sq, activity_prob, channel_var, mask)
        yield t, x, v, tau_sq


def amp_step(state: AmpState, P: PilotMatrix, y: Observation, activity_prob: float,
             channel_var: float = 1.0) -> AmpState:
    """One AMP iteration from ``state``; denoises at ``state.tau_sq``."""
    A = P.entries
    M, N = A.shape
    if state.residual.shape != (M,) or state.estimate.shape != (N,) or y.received.shape != (M,):
        raise ValueError("state, pilots and observation dimensions disagree")
    mask = _constraint_mask(state.constraint, (), N)
    x, v, tau_sq = _step(A, y.received, state.estimate, state.residual, state.tau_sq,
                         activity_prob, channel_var, mask)
    return AmpState(x, v, float(tau_sq), state.iteration + 1, state.constraint)


def run_amp(P: PilotMatrix, y: Observation, cfg: ExperimentConfig, iterations: int,
            constraint: Optional[int] = None) -> List[AmpState]:
    """Run ``iterations`` AMP steps from ``x = 0, v = y``; returns states 1..iterations."""
    A = P.entries
    if y.received.shape != (A.shape[0],) or A.shape[1] != cfg.n_devices:
        raise ValueError("pilots, observation and config dimensions disagree")
    states = []
    for t, x, v, tau_sq in iterate_amp(A, y.received, cfg.activity_prob, cfg.channel_var,
                                       initial_tau_sq(cfg), iterations, constraint):
        states.append(AmpState(x, v, float(tau_sq), t, constraint))
    return states


def state_evolution_predict(cfg: ExperimentConfig, iterations: int, samples: int = 100_000,
                            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Monte-Carlo state evolution; returns ``tau_t^2`` for ``t = 0..iterations``.

    The same prior and noise samples are reused at every step.
    """
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    rng = np.random.default_rng(0) if rng is None else rng
    s = np.sqrt(0.5)
    active = rng.random(samples) < cfg.activity_prob
    h = np.sqrt(cfg.channel_var) * s * (rng.standard_normal(samples) + 1j * rng.standard_normal(samples))
    x = active * h
    w = s * (rng.standard_normal(samples) + 1j * rng.standard_normal(samples))
    taus = [initial_tau_sq(cfg)]
    for _ in range(iterations):
        t = taus[-1]
        est, _ = _denoise(x + np.sqrt(t) * w, cfg.activity_prob, cfg.channel_var, t, deriv=False)
        mse = np.mean(np.abs(est - x) ** 2)
        taus.append(cfg.noise_var + cfg.undersampling * mse)
    return np.array(taus)
