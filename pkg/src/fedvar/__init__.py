"""Federated learning with a geometrically varying Gaussian noise schedule.

The package simulates privacy-preserving distributed gradient descent in
which every client upload is perturbed with Gaussian noise whose variance
follows a geometric progression across aggregation rounds.  It provides:

- amplitude calibration for a target (epsilon, delta) budget and moments-
  based verification of any realized variance sequence (``privacy``),
- the closed-form convergence bound, its derivative in the round count,
  and the optimal-round-count search (``bounds``),
- the training loop itself with norm clipping, client sampling, weighted
  aggregation, and online schedule adjustment (``engine``),
- reproducible models, datasets, and partitions (``models``, ``data``),
- an INI-configured command line with delimited reports and figures
  (``config``, ``cli``, ``figures``).

All randomness derives from a single master seed through counter-based
streams, so every result is reproducible bit for bit.
"""

from .bounds import (BoundParams, Heterogeneity, OptimalSearch,
                     amplification, bound_derivative, convergence_bound,
                     convexity_holds, estimate_heterogeneity, h_gap,
                     optimal_M, phi)
from .data import (Dataset, Partition, load_csv, load_idx,
                   partition_by_label, partition_iid, synth_blobs)
from .engine import (ClientState, FederationConfig, RoundMetrics, RunResult,
                     aggregate, clip_to_norm, local_update, maybe_adjust,
                     perturb, probe_heterogeneity, run_training,
                     sample_clients)
from .models import (MlpArchitecture, MlpModel, ModelParams, SvmModel,
                     mlp_gradient, mlp_loss, mlp_predict, svm_loss,
                     svm_predict, svm_subgradient)
from .privacy import (BudgetCheck, MomentAccount, NoiseSchedule,
                      PrivacyBudget, account_for, adjusted_sigma,
                      calibrate_schedule, geometric_factor, initial_sigma,
                      log_moment, moment_tail_bound, sensitivity_from_clip,
                      variance_at_round, verify_account, verify_budget)
from .rng import CounterRng, mix64, stream_key

__version__ = "0.1.0"

__all__ = [
    "BoundParams", "Heterogeneity", "OptimalSearch", "amplification",
    "bound_derivative", "convergence_bound", "convexity_holds",
    "estimate_heterogeneity", "h_gap", "optimal_M", "phi",
    "Dataset", "Partition", "load_csv", "load_idx", "partition_by_label",
    "partition_iid", "synth_blobs",
    "ClientState", "FederationConfig", "RoundMetrics", "RunResult",
    "aggregate", "clip_to_norm", "local_update", "maybe_adjust", "perturb",
    "probe_heterogeneity", "run_training", "sample_clients",
    "MlpArchitecture", "MlpModel", "ModelParams", "SvmModel",
    "mlp_gradient", "mlp_loss", "mlp_predict", "svm_loss", "svm_predict",
    "svm_subgradient",
    "BudgetCheck", "MomentAccount", "NoiseSchedule", "PrivacyBudget",
    "account_for", "adjusted_sigma", "calibrate_schedule",
    "geometric_factor", "initial_sigma", "log_moment", "moment_tail_bound",
    "sensitivity_from_clip", "variance_at_round", "verify_account",
    "verify_budget",
    "CounterRng", "mix64", "stream_key",
    "__version__",
]
