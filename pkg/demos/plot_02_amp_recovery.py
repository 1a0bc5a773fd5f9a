"""
AMP with the Bernoulli-Gaussian MMSE denoiser
==============================================

One grant-free access instance: 150 devices, 30 pilot symbols, about 15
active.  We watch the estimate improve over iterations and compare the
effective noise level with its state-evolution prediction.
"""

import numpy as np

from listamp import ExperimentConfig, draw_trial, nmse_linear, run_amp, state_evolution_predict

cfg = ExperimentConfig(seed=3)
P, truth, y = draw_trial(cfg, trial=0)
print(f"{truth.n_active} active devices")

traj = run_amp(P, y, cfg, iterations=20)
for s in traj[::4]:
    err = 10 * np.log10(nmse_linear(s.estimate, truth.signal))
    print(f"t={s.iteration:2d}  tau^2={s.tau_sq:.4f}  NMSE={err:6.2f} dB")

# state evolution is the large-system picture; at N = 150 it is optimistic
se = state_evolution_predict(cfg, 5, samples=50_000)
print("SE tau^2:", np.round(se, 4))
