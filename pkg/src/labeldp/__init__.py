"""Label-DP training mechanisms, label inference attacks, and the bounds
that relate the two through attack advantage."""

from .attacks import AdversaryKnowledge, InferredLabels, marginal_guess, prior_attack, spa
from .data import (
    Conditional,
    CsvFormatError,
    Dataset,
    MixtureModel,
    SkewedBinarySpec,
    gen_mixture,
    gen_skewed_binary,
    load_csv,
    resample_labels,
    split,
    write_csv,
)
from .mechanisms import (
    MechanismReport,
    PriorTable,
    PrivacyParams,
    account,
    alibi,
    cluster_prior,
    keep_probability,
    lp_mst,
    pate,
    randomized_response,
    rr_with_prior,
)
from .metrics import (
    BoundQuery,
    CalibrationResult,
    MetricsReport,
    UtilitySpec,
    advantage,
    advantage_bound,
    calibrate_epsilon,
    dp_generalization_gap_bound,
    eau_empirical,
    eau_monte_carlo,
    hoeffding_lower_bound,
    leau_estimate,
    leau_exact,
    reconstruction_bound,
    universal_bound,
    utility,
    weak_threat_bound,
)
from .models import (
    LogisticHyper,
    Model,
    TrainingDivergedError,
    bayes_model,
    constant_model,
    load_model,
    log_loss,
    majority_table,
    save_model,
    stability_threshold,
    train_logistic,
)

__version__ = "0.1.0"
