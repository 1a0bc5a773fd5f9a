"""Grant-free access system model.

Pilot matrices (optionally passed through a uniform low-resolution quantizer),
Bernoulli device activity, Rayleigh fading and AWGN observations ``y = P x + z``.

Random-number contract
----------------------
Every trial owns a generator derived from ``(seed, trial)`` and draws, in order:
pilots (only when the pilot matrix is not fixed), activity, fading, noise.
A fixed pilot matrix is drawn once from its own stream keyed by ``pilot_seed``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "ExperimentConfig",
    "PilotMatrix",
    "GroundTruth",
    "Observation",
    "noise_variance_from_snr",
    "quantizer_step",
    "quantize",
    "gen_pilot_matrix",
    "gen_ground_truth",
    "synthesize_observation",
    "trial_rng",
    "pilot_rng",
    "draw_trial",
    "fixed_pilots",
]

# spawn keys separating the independent random streams of one experiment
_PILOT_STREAM = 0
_TRIAL_STREAM = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one simulated access scenario.

    ``quant_bits=None`` means unquantized pilots.  ``pilot_seed=None`` draws a
    fresh pilot matrix in every trial; an integer fixes one pilot matrix for
    the whole experiment (needed whenever a network is trained on it).
    """

    n_devices: int = 150
    pilot_length: int = 30
    activity_prob: float = 0.1
    quant_bits: Optional[int] = 3
    snr_db: float = 40.0
    channel_std: float = 1.0
    seed: int = 0
    pilot_seed: Optional[int] = None

    def __post_init__(self):
        # canonical types, so 40 and 40.0 describe (and hash as) the same scenario
        for name in ("activity_prob", "snr_db", "channel_std"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("n_devices", "pilot_length", "seed", "quant_bits", "pilot_seed"):
            v = getattr(self, name)
            if v is not None:
                if int(v) != v:
                    raise ValueError(f"{name} must be an integer, got {v!r}")
                object.__setattr__(self, name, int(v))
        if self.n_devices < 1 or self.pilot_length < 1:
            raise ValueError("n_devices and pilot_length must be positive")
        if not 0.0 <= self.activity_prob <= 1.0:
            raise ValueError(f"activity_prob must lie in [0, 1], got {self.activity_prob}")
        if self.quant_bits is not None and self.quant_bits < 1:
            raise ValueError(f"quant_bits must be >= 1, got {self.quant_bits}")
        if not self.channel_std > 0:
            raise ValueError("channel_std must be positive")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.seed < 0 or (self.pilot_seed is not None and self.pilot_seed < 0):
            raise ValueError("seeds must be non-negative")

    @property
    def quantized(self) -> bool:
        return self.quant_bits is not None

    @property
    def channel_var(self) -> float:
        return self.channel_std ** 2

    @property
    def noise_var(self) -> float:
        # per-device receive SNR: sigma_h^2 / sigma_z^2
        return self.channel_var * noise_variance_from_snr(self.snr_db)

    @property
    def undersampling(self) -> float:
        """N / M."""
        return self.n_devices / self.pilot_length

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig(**{**asdict(self), **changes})

    def scenario(self) -> dict:
        """Fields that define the statistical scenario (everything but ``seed``)."""
        d = asdict(self)
        del d["seed"]
        return d

    def fingerprint(self) -> str:
        """Short hash of the scenario; the trial seed is deliberately excluded."""
        blob = json.dumps(self.scenario(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PilotMatrix:
    entries: np.ndarray
    quantized: bool = False
    delta: Optional[float] = None

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True, eq=False)
class GroundTruth:
    activity: np.ndarray
    fading: np.ndarray
    signal: np.ndarray = field(init=False)
    n_active: int = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.activity, dtype=np.int8)
        object.__setattr__(self, "activity", a)
        object.__setattr__(self, "signal", a * np.asarray(self.fading))
        object.__setattr__(self, "n_active", int(a.sum()))


@dataclass(frozen=True, eq=False)
class Observation:
    received: np.ndarray
    noise_var: float


def noise_variance_from_snr(snr_db: float) -> float:
    """Noise variance for a unit-variance channel at ``snr_db``."""
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    return float(10.0 ** (-snr_db / 10.0))


def quantizer_step(bits: int, pilot_length: int) -> float:
    return 6.0 / np.sqrt(2.0 * pilot_length) / (2 ** bits - 1)


def _quantize_real(c, delta, limit):
    return delta * np.floor(np.clip(c, -limit, limit) / delta + 0.5)


def quantize(value, bits: int, pilot_length: int):
    """Uniform quantizer applied separately to the real and imaginary parts.

    Each component is saturated to ``+-3/sqrt(2M)`` and rounded to
    ``delta * floor(c/delta + 1/2)``.  The rounding rule is applied literally,
    so the level indices are ``-(2**(b-1) - 1) ... 2**(b-1)``: 2**b levels with
    the extra one at the positive end.

    Works elementwise on scalars and arrays.
    """
    if bits < 1 or pilot_length < 1:
        raise ValueError("bits and pilot_length must be >= 1")
    delta = quantizer_step(bits, pilot_length)
    limit = 3.0 / np.sqrt(2.0 * pilot_length)
    value = np.asarray(value)
    out = _quantize_real(value.real, delta, limit) + 1j * _quantize_real(value.imag, delta, limit)
    return out if out.ndim else complex(out)


def pilot_rng(pilot_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(pilot_seed, spawn_key=(_PILOT_STREAM,)))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Generator owned by one trial; independent of every other trial."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_TRIAL_STREAM, trial)))


def _cn(rng, size, var):
    """Circularly-symmetric complex Gaussian samples of variance ``var``."""
    s = np.sqrt(var / 2.0)
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return s * re + 1j * (s * im)


def gen_pilot_matrix(cfg: ExperimentConfig, rng: np.random.Generator) -> PilotMatrix:
    M, N = cfg.pilot_length, cfg.n_devices
    u = _cn(rng, (M, N), 1.0 / M)
    if not cfg.quantized:
        return PilotMatrix(u)
    return PilotMatrix(
        quantize(u, cfg.quant_bits, M),
        quantized=True,
        delta=quantizer_step(cfg.quant_bits, M),
    )


def gen_ground_truth(cfg: ExperimentConfig, rng: np.random.Generator) -> GroundTruth:
    N = cfg.n_devices
    activity = rng.random(N) < cfg.activity_prob
    fading = _cn(rng, N, cfg.channel_var)
    return GroundTruth(activity, fading)


def synthesize_observation(P: PilotMatrix, truth: GroundTruth, noise_var: float,
                           rng: np.random.Generator) -> Observation:
    A = P.entries
    if A.shape[1] != truth.signal.shape[0]:
        raise ValueError(
            f"pilot matrix has {A.shape[1]} columns but signal has length {truth.signal.shape[0]}")
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    z = _cn(rng, A.shape[0], noise_var)
    return Observation(A @ truth.signal + z, noise_var)


def draw_trial(cfg: ExperimentConfig, trial: int, pilots: Optional[PilotMatrix] = None):
    """Draw ``(P, truth, obs)`` for trial ``trial`` of the experiment.

    When ``pilots`` is given it is used as the fixed pilot matrix and the trial
    stream skips the pilot draw.
    """
    rng = trial_rng(cfg.seed, trial)
    if pilots is None:
        pilots = gen_pilot_matrix(cfg, rng)
    truth = gen_ground_truth(cfg, rng)
    obs = synthesize_observation(pilots, truth, cfg.noise_var, rng)
    return pilots, truth, obs


def fixed_pilots(cfg: ExperimentConfig) -> Optional[PilotMatrix]:
    """The experiment-wide pilot matrix, or None when pilots are redrawn per trial."""
    if cfg.pilot_seed is None:
        return None
    return gen_pilot_matrix(cfg, pilot_rng(cfg.pilot_seed))
