"""
Training the false-alarm likelihood network
===========================================

The network sees the normalized observation and the hard activity decision
from round 1 and scores each device by how likely it is a false alarm.  The
pilot matrix is held fixed so the network can learn its structure.  This demo
uses 30k samples and five epochs, which is too little for the selector to
beat plain AMP; the gain only appears with millions of samples (see README).
"""

import numpy as np

from listamp import (ExperimentConfig, TrainingConfig, generate_dataset, monte_carlo_nmse,
                     save_model, train)

cfg = ExperimentConfig(pilot_seed=1, seed=100)
features, labels, header = generate_dataset(cfg, 30_000)
print("dataset", features.shape, labels.shape)

meta = {"scenario": header["scenario"], "snr_db": header["snr_db"]}
net, hist = train(features, labels, TrainingConfig(max_epochs=5), meta)
print("layer sizes", net.layer_dims)
print("validation loss per epoch", np.round(hist.val_loss, 5))
save_model(net, "fal_net_demo.bin")

test = cfg.replace(seed=999)
for alg in ("amp-mmse", "dl-lamp"):
    r = monte_carlo_nmse(test, alg, [20], 1000, net)[20]
    print(f"{alg}: {r['nmse_db']:.2f} dB")
