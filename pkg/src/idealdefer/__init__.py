"""Learning to defer through ideal distributions and density-ratio scorers."""

from .config import ConfigError, ExperimentConfig, default_config, specialist_config
from .core import Dataset, PointLossKind, loss_table, point_loss, point_losses
from .drcpe import (
    gap_bounds,
    get_spec,
    joint_drcpe_loss,
    marginal_drcpe_loss,
    pointwise_optimal_score,
    ratio_from_score,
    score_threshold,
)
from .estimators import (
    ConfDeferral,
    DeferralFeatures,
    DRCPEDeferral,
    EstimateDiff01Deferral,
    EstimateMaxProbDeferral,
    MLPClassifier,
    TwoStageExpDeferral,
    train_classifier,
    train_deferral_scorer,
)
from .experiment import (
    DeferralCurve,
    random_baseline_curve,
    run_experiment,
    system_accuracy,
)
from .ideal import (
    CHI2_GENERATOR,
    KL_GENERATOR,
    kl_joint_weight,
    kl_marginal_weight,
    normalize_weights,
    phi_ideal_ratio,
)
from .rules import chow_defer, dr_defer_from_weights, threshold_from_rate, tilt_posterior
from .synth import CorruptionSpec, MixtureSpec, apply_corruption, gen_mixture, three_way_split

__version__ = "0.1.0"
