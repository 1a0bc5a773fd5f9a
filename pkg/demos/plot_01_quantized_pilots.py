"""
Low-resolution pilot sequences
==============================

Pilot entries are complex Gaussian with variance 1/M, then each real and
imaginary part is passed through a b-bit uniform quantizer that saturates at
three standard deviations.
"""

import numpy as np

from listamp import ExperimentConfig, gen_pilot_matrix, quantize, quantizer_step

cfg = ExperimentConfig(n_devices=150, pilot_length=30, quant_bits=3, seed=7)
P = gen_pilot_matrix(cfg, np.random.default_rng(cfg.seed))
delta = quantizer_step(3, 30)
print(f"step {delta:.7f}, matrix {P.entries.shape}")

# the real parts live on an 8-point grid, asymmetric because of the mid-riser rounding
levels = np.unique(np.round(P.entries.real / delta).astype(int))
print("levels (in steps):", levels)

# quantizing again changes nothing
assert np.array_equal(quantize(P.entries, 3, 30), P.entries)

# average power per entry stays close to 1/M
print(f"mean |p|^2 = {np.mean(np.abs(P.entries) ** 2):.4f}  (1/M = {1 / 30:.4f})")
