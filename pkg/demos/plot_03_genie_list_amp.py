"""
List AMP with a genie selector
==============================

After a first AMP run the genie names the inactive device with the largest
error.  A second run pins that device to zero and the residual test keeps
whichever candidate explains y better.  Averaged over trials this gives the
upper reference for a learned selector.
"""

from listamp import ExperimentConfig, draw_trial, monte_carlo_nmse, run_ga_lamp

cfg = ExperimentConfig(seed=11)
P, truth, y = draw_trial(cfg, 0)
res = run_ga_lamp(P, y, truth, cfg, iterations=20)
print(f"suspicious device {res.suspicious_index}, kept branch {res.chosen_branch}")
assert res.second_estimate[res.suspicious_index] == 0

# a short Monte-Carlo run; use 10k trials for table-quality numbers
for alg in ("amp-mmse", "ga-lamp"):
    out = monte_carlo_nmse(cfg, alg, [3, 5, 10, 20], trials=1000)
    print(alg, {t: round(r["nmse_db"], 2) for t, r in out.items()})
