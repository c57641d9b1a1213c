"""Pool-based active-learning simulator comparing neural-network confidence
measures, with an uncertainty-clipping heuristic for outlier-heavy pools."""

from .data import Dataset, PoolState, generate_blobs, load_csv, save_csv, split, standardize
from .learner import (
    LearnerConfig,
    LearnerModel,
    TrainingDiverged,
    accuracy,
    forward_logits,
    gradient,
    loss_cross_entropy,
    loss_evidential,
    loss_inhibited,
    loss_label_smoothing,
    predict,
    train,
)
from .confidence import (
    ConfidenceReport,
    TrustIndex,
    build_trust_index,
    ensemble_kld,
    ensemble_vote_entropy,
    evidential_confidence,
    fit_temperature,
    inhibited_softmax,
    label_smoothing_confidence,
    mc_dropout,
    softmax,
    temperature_scaled,
    trust_score,
)
from .strategy import (
    PoolExhausted,
    QueryRequest,
    apply_clipping,
    entropy_strategy,
    least_confidence,
    margin_strategy,
    random_strategy,
)
from .simulator import (
    ExperimentConfig,
    ExperimentResult,
    MethodParams,
    compute_acc_last5,
    run_experiment,
    two_model_step,
)
from .analysis import class_shift, jaccard, jaccard_delta, jaccard_matrix, summarize

__version__ = "0.1.0"
