"""
Missed detection versus false alarm
===================================

Sweeping a magnitude threshold over the final estimates traces mean P_f
against mean P_m.  The region of interest is P_f between 0.008 and 0.1.
"""

import numpy as np

from listamp import ExperimentConfig, default_thresholds, roc_curve

cfg = ExperimentConfig(pilot_seed=1, seed=999)
rows = {alg: np.array(roc_curve(cfg, alg, default_thresholds(), trials=500, iterations=100))
        for alg in ("amp-mmse", "ga-lamp")}

print(" delta    P_f(amp)  P_m(amp)  P_f(ga)  P_m(ga)")
for a, g in zip(rows["amp-mmse"], rows["ga-lamp"]):
    if 0.008 <= a[1] <= 0.1:
        print(f"{a[0]:.4f}   {a[1]:.4f}    {a[2]:.4f}    {g[1]:.4f}   {g[2]:.4f}")
