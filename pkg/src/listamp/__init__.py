"""List AMP with a learned false-alarm selector for grant-free activity detection."""

from .sysmodel import (ExperimentConfig, GroundTruth, Observation, PilotMatrix, draw_trial,
                       fixed_pilots, gen_ground_truth, gen_pilot_matrix, noise_variance_from_snr,
                       quantize, quantizer_step, synthesize_observation)
from .amp import (AmpState, DenoiserParams, amp_step, empirical_tau, mmse_denoise,
                  mmse_denoise_deriv, run_amp, state_evolution_predict)
from .falnet import (FalNetParams, TrainingConfig, activity_estimate, forward, load_model,
                     make_label, preprocess_features, save_model, train)
from .pipeline import (ListResult, dnn_select, genie_select, lmse_select, run_dl_lamp,
                       run_ga_lamp)
from .metrics import detect_fixed_threshold, nmse_db, nmse_linear, pf_pm, roc_sweep
from .harness import default_thresholds, generate_dataset, monte_carlo_nmse, roc_curve

__version__ = "0.1.0"
