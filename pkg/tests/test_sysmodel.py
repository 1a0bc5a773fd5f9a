import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from listamp.sysmodel import (ExperimentConfig, GroundTruth, Observation, PilotMatrix,
                              draw_trial, fixed_pilots, gen_ground_truth, gen_pilot_matrix,
                              noise_variance_from_snr, quantize, quantizer_step,
                              synthesize_observation, trial_rng)

DELTA_3_30 = 6 / (np.sqrt(60) * 7)


@pytest.mark.parametrize("snr, expected", [(0, 1.0), (40, 1e-4), (15, 0.0316227766)])
def test_noise_variance_from_snr(snr, expected):
    assert noise_variance_from_snr(snr) == pytest.approx(expected, rel=1e-8)


def test_noise_variance_rejects_nonfinite():
    with pytest.raises(ValueError):
        noise_variance_from_snr(float("inf"))


def test_quantizer_step_value():
    assert quantizer_step(3, 30) == pytest.approx(0.1106567, abs=1e-7)


@pytest.mark.parametrize("value, expected, steps", [
    (0j, 0j, 0),
    (0.06 - 0.06j, 0.1106567 - 0.1106567j, 1),
    # printed as 4 x (step rounded to 7 places), so allow 4 half-units of rounding
    (1 + 1j, 0.4426268 + 0.4426268j, 4),
])
def test_quantize_examples(value, expected, steps):
    out = quantize(value, 3, 30)
    tol = max(steps, 1) * 0.5e-7
    assert out.real == pytest.approx(expected.real, abs=tol)
    assert out.imag == pytest.approx(expected.imag, abs=tol)
    assert abs(out.real) == pytest.approx(steps * DELTA_3_30, rel=1e-15)


def test_quantize_lower_clamp_is_minus_three_steps():
    out = quantize(-1 - 1j, 3, 30)
    assert out == pytest.approx(-3 * DELTA_3_30 * (1 + 1j))


finite = st.floats(-2, 2, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(finite, finite, st.integers(1, 6), st.integers(1, 64))
def test_quantize_idempotent_and_componentwise(re, im, bits, M):
    q = quantize(complex(re, im), bits, M)
    assert quantize(q, bits, M) == q
    assert q.real == quantize(complex(re, 0.0), bits, M).real
    assert q.imag == quantize(complex(im, 0.0), bits, M).real


@pytest.mark.parametrize("bits", [1, 2, 3, 4])
def test_quantize_level_count(bits):
    rng = np.random.default_rng(bits)
    v = rng.normal(scale=0.5, size=20000) + 1j * rng.normal(scale=0.5, size=20000)
    q = quantize(v, bits, 30)
    assert len(np.unique(q.real)) == 2 ** bits
    assert len(np.unique(q.imag)) == 2 ** bits


def test_quantized_pilot_matrix_on_grid():
    cfg = ExperimentConfig(n_devices=150, pilot_length=30, quant_bits=3)
    P = gen_pilot_matrix(cfg, np.random.default_rng(7))
    assert P.entries.shape == (30, 150) and P.quantized
    assert P.delta == pytest.approx(0.1106567, abs=1e-7)
    for comp in (P.entries.real, P.entries.imag):
        idx = comp / P.delta
        assert np.allclose(idx, np.round(idx), atol=1e-9)
        assert idx.min() >= -3 - 1e-9 and idx.max() <= 4 + 1e-9


def test_unquantized_pilot_power():
    cfg = ExperimentConfig(n_devices=3334, pilot_length=30, quant_bits=None)
    P = gen_pilot_matrix(cfg, np.random.default_rng(0)).entries
    assert P.size > 1e5
    assert np.mean(np.abs(P) ** 2) == pytest.approx(1 / 30, rel=0.05)
    # circular: real and imaginary parts share the power
    assert np.var(P.real) == pytest.approx(1 / 60, rel=0.05)


def test_pilot_matrix_deterministic():
    cfg = ExperimentConfig()
    a = gen_pilot_matrix(cfg, np.random.default_rng(3)).entries
    b = gen_pilot_matrix(cfg, np.random.default_rng(3)).entries
    assert a.tobytes() == b.tobytes()


def test_ground_truth_degenerate_probabilities():
    rng = np.random.default_rng(0)
    t0 = gen_ground_truth(ExperimentConfig(activity_prob=0.0), rng)
    assert t0.n_active == 0 and not t0.signal.any()
    t1 = gen_ground_truth(ExperimentConfig(activity_prob=1.0), rng)
    assert t1.n_active == 150 and np.array_equal(t1.signal, t1.fading)


def test_ground_truth_mean_active_count():
    cfg = ExperimentConfig()
    ks = [gen_ground_truth(cfg, trial_rng(1, k)).n_active for k in range(10_000)]
    assert np.mean(ks) == pytest.approx(15, rel=0.02)


def test_ground_truth_signal_zero_where_inactive():
    truth = gen_ground_truth(ExperimentConfig(activity_prob=0.3), np.random.default_rng(5))
    assert np.all(truth.signal[truth.activity == 0] == 0)
    assert np.array_equal(truth.signal, truth.activity * truth.fading)


def test_observation_homogeneous_and_identity():
    N = 4
    P = PilotMatrix(np.eye(N, dtype=complex) * (1 + 2j))
    zero = GroundTruth(np.zeros(N), np.ones(N))
    y = synthesize_observation(P, zero, 0.0, np.random.default_rng(0))
    assert not y.received.any()
    e1 = GroundTruth(np.eye(N)[0], np.ones(N))
    y = synthesize_observation(P, e1, 0.0, np.random.default_rng(0))
    assert np.array_equal(y.received, P.entries[:, 0])


def test_observation_dimension_mismatch():
    P = PilotMatrix(np.ones((3, 5), complex))
    with pytest.raises(ValueError):
        synthesize_observation(P, GroundTruth(np.ones(4), np.ones(4)), 0.1,
                               np.random.default_rng(0))


def test_observation_power_accounting():
    cfg = ExperimentConfig(snr_db=40)
    py, px = [], []
    for k in range(10_000):
        P, truth, obs = draw_trial(cfg, k)
        py.append(np.sum(np.abs(obs.received) ** 2))
        px.append(np.sum(np.abs(P.entries @ truth.signal) ** 2))
    assert np.mean(py) == pytest.approx(30 * 1e-4 + np.mean(px), rel=0.05)


def test_draw_trial_pure_function_of_seed():
    cfg = ExperimentConfig(seed=9)
    a = draw_trial(cfg, 17)
    b = draw_trial(cfg, 17)
    for u, v in zip((a[0].entries, a[1].signal, a[2].received),
                    (b[0].entries, b[1].signal, b[2].received)):
        assert u.tobytes() == v.tobytes()
    c = draw_trial(cfg, 18)
    assert not np.array_equal(a[2].received, c[2].received)


def test_fixed_pilots_shared_across_trials_and_seeds():
    cfg = ExperimentConfig(pilot_seed=4)
    P = fixed_pilots(cfg)
    assert P is not None
    assert np.array_equal(P.entries, fixed_pilots(cfg.replace(seed=123)).entries)
    assert fixed_pilots(ExperimentConfig()) is None


def test_config_validation_and_fingerprint():
    with pytest.raises(ValueError):
        ExperimentConfig(activity_prob=1.5)
    with pytest.raises(ValueError):
        ExperimentConfig(quant_bits=0)
    a = ExperimentConfig(seed=1)
    assert a.fingerprint() == a.replace(seed=2).fingerprint()
    assert a.fingerprint() != a.replace(snr_db=15).fingerprint()
    assert a.noise_var == pytest.approx(1e-4)
