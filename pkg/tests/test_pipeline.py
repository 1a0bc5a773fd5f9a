import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from listamp.amp import initial_tau_sq, iterate_amp, run_amp
from listamp.falnet import init_params, layer_dims
from listamp.pipeline import (ModelMismatchError, check_compatible, dnn_select, genie_select,
                              genie_select_batch, lmse_select, residual_energy, run_dl_lamp,
                              run_ga_lamp, second_round_batch)
from listamp.sysmodel import ExperimentConfig, GroundTruth, Observation, PilotMatrix, draw_trial

CFG = ExperimentConfig(seed=5)


def zero_net(cfg=CFG):
    p = init_params(layer_dims(cfg.pilot_length, cfg.n_devices), np.random.default_rng(0))
    p.weights = [np.zeros_like(w) for w in p.weights]
    p.metadata["scenario"] = cfg.scenario()
    return p


def test_genie_select_examples():
    truth = GroundTruth(np.array([1, 0, 0]), np.array([1.0 + 0j, 0, 0]))
    assert genie_select(np.array([5.0, 0.3, 0.6]), truth) == 2
    x = np.array([0.4j, 1.0])
    assert genie_select(x, GroundTruth(np.array([0, 1]), x)) == 0
    b = np.zeros(12)
    b[7] = 0.5
    assert genie_select(b, GroundTruth(np.zeros(12), np.zeros(12))) == 7
    with pytest.raises(ValueError):
        genie_select(np.zeros(3), GroundTruth(np.zeros(4), np.zeros(4)))


def test_dnn_select_ties_and_dominance():
    P, _, obs = draw_trial(CFG, 0)
    x1 = run_amp(P, obs, CFG, 5)[-1].estimate
    net = zero_net()
    assert dnn_select(net, obs, x1, 0.1) == 0
    net.biases[-1] = np.zeros(150)
    net.biases[-1][42] = 20.0
    assert dnn_select(net, obs, x1, 0.1) == 42


def test_lmse_select_examples():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    x = rng.normal(size=5) + 0j
    P, y = PilotMatrix(A), Observation(A @ x, 0.0)
    c = x + 0.1
    assert lmse_select(y, P, [c, c.copy()])[1] == 1
    assert lmse_select(y, P, [c, x])[1] == 2
    est, br = lmse_select(y, P, [x])
    assert br == 1 and est is x
    with pytest.raises(ValueError):
        lmse_select(y, P, [])


def test_lmse_select_matches_high_precision_residuals():
    rng = np.random.default_rng(2)
    for _ in range(10):
        A = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
        y = rng.normal(size=4) + 1j * rng.normal(size=4)
        cands = [rng.normal(size=6) + 1j * rng.normal(size=6) for _ in range(3)]

        def res(c):
            tot = mp.mpf(0)
            for m in range(4):
                r = mp.mpc(y[m]) - mp.fsum(mp.mpc(A[m, n]) * mp.mpc(c[n]) for n in range(6))
                tot += abs(r) ** 2
            return tot

        exact = [res(c) for c in cands]
        want = min(range(3), key=lambda i: exact[i]) + 1
        est, br = lmse_select(Observation(y, 0.0), PilotMatrix(A), cands)
        assert br == want and est is cands[want - 1]
        np.testing.assert_allclose(residual_energy(y, A, cands[0]), float(exact[0]), rtol=1e-12)


def _check_list_result(res, P, y, x_amp):
    s = res.suspicious_index
    assert res.second_estimate[s] == 0
    assert np.array_equal(res.first_estimate, x_amp)
    cand = [res.first_estimate, res.second_estimate][res.chosen_branch - 1]
    assert res.final_estimate.tobytes() == cand.tobytes()
    e = [residual_energy(y.received, P.entries, c) for c in (res.first_estimate, res.second_estimate)]
    assert residual_energy(y.received, P.entries, res.final_estimate) == min(e)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([3, 10, 20]))
def test_ga_lamp_invariants(seed, t):
    cfg = CFG.replace(seed=seed)
    P, truth, obs = draw_trial(cfg, 0)
    res = run_ga_lamp(P, obs, truth, cfg, t)
    _check_list_result(res, P, obs, run_amp(P, obs, cfg, t)[-1].estimate)
    assert truth.activity[res.suspicious_index] == 0 or res.degenerate
    # second round restarts from scratch: identical to an independent constrained run
    x2 = run_amp(P, obs, cfg, t, constraint=res.suspicious_index)[-1].estimate
    assert np.array_equal(res.second_estimate, x2)


def test_ga_lamp_degenerate_all_active():
    cfg = ExperimentConfig(n_devices=6, pilot_length=4, activity_prob=1.0, seed=1)
    P, truth, obs = draw_trial(cfg, 0)
    res = run_ga_lamp(P, obs, truth, cfg, 5)
    assert res.degenerate and res.suspicious_index == 0


def test_ga_lamp_noiseless_exact_round_one_keeps_branch_one():
    A = np.eye(3, dtype=complex)
    x = np.array([0, 2.0 + 1j, 0])
    cfg = ExperimentConfig(n_devices=3, pilot_length=3, activity_prob=1 / 3, snr_db=300)
    P, y = PilotMatrix(A), Observation(A @ x, 0.0)
    truth = GroundTruth(np.array([0, 1, 0]), x)
    x1 = run_amp(P, y, cfg, 30)[-1].estimate
    assert residual_energy(y.received, A, x1) < 1e-12
    assert run_ga_lamp(P, y, truth, cfg, 30).chosen_branch == 1


@pytest.mark.parametrize("seed", range(3))
def test_dl_lamp_constant_net_is_valid(seed):
    cfg = CFG.replace(seed=seed)
    P, _, obs = draw_trial(cfg, 0)
    res = run_dl_lamp(zero_net(cfg), P, obs, cfg, 10)
    assert res.suspicious_index == 0
    _check_list_result(res, P, obs, run_amp(P, obs, cfg, 10)[-1].estimate)


def test_dl_lamp_rejects_mismatched_model():
    P, _, obs = draw_trial(CFG, 0)
    net = zero_net()
    with pytest.raises(ModelMismatchError, match="snr_db"):
        run_dl_lamp(net, P, obs, CFG.replace(snr_db=15), 5)
    net.metadata.pop("scenario")
    with pytest.raises(ModelMismatchError):
        check_compatible(net, CFG)
    # a different seed is the same scenario
    check_compatible(zero_net(), CFG.replace(seed=77))


def test_batched_second_round_matches_single():
    cfg = CFG
    Ps, truths, ys = zip(*[draw_trial(cfg, k) for k in range(4)])
    A = np.stack([p.entries for p in Ps])
    Y = np.stack([o.received for o in ys])
    X = np.stack([t.signal for t in truths])
    act = np.stack([t.activity for t in truths])
    for _, X1, _, _ in iterate_amp(A, Y, 0.1, 1.0, initial_tau_sq(cfg), 10):
        pass
    s = genie_select_batch(X1, X, act)
    final, branch = second_round_batch(A, Y, X1, s, cfg, 10)
    for k in range(4):
        res = run_ga_lamp(Ps[k], ys[k], truths[k], cfg, 10)
        assert res.suspicious_index == s[k]
        assert res.chosen_branch == branch[k]
        np.testing.assert_allclose(final[k], res.final_estimate, atol=1e-12)
