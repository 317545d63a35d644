"""fedarmor: a desk-scale federated learning harness with differentially
private channels, gradient-sign attacks, and server-side adversarial
adaptation, built for deterministic experimentation."""

from .attacks import AttackSpec, adversarial_loss, craft_set, fgsm, fgsm_spec, pgd, pgd_spec
from .config import (
    DEFAULTS,
    EPSILON_PRESETS,
    FRACTION_PRESET,
    DataConfig,
    ExperimentConfig,
    parse_config,
    parse_dict,
)
from .data import (
    PartitionSpec,
    SynthSpec,
    gen_synthetic,
    load_csv,
    partition_non_iid,
    save_csv,
)
from .errors import ConfigError, DomainError, ExperimentError, ParseError, ShapeError
from .federation import (
    DEFENSES,
    FederationConfig,
    FederationState,
    broadcast_noisy,
    fed_avg,
    retraining_risk,
    run_experiment,
    run_round,
    server_adapt,
)
from .metrics import MetricsReport, asr, clean_accuracy, evaluate_attack, transfer_matrix
from .nn import Dataset, ModelParams, forward, grad_input, grad_params, init_params, loss, predict, train_local
from .privacy import (
    NoiseChannel,
    PrivacySpec,
    clip_params,
    default_noise_multiplier,
    gaussian_perturb,
    noise_scale,
    uplink_sensitivity,
)

__version__ = "0.1.0"
