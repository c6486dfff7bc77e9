"""Prequential description lengths for frozen representations, with readout-model switching."""

__version__ = "0.1.0"

from .core import DataError, FeatureSequence, LossMatrix, log_sum_exp, validate_feature_sequence
from .switching import (
    CodelengthResult,
    ForwardFilter,
    PosteriorTrace,
    SwitchingStrategy,
    bayesian_mixture_codelength,
    elementwise_mixture_codelength,
    forward_codelength,
    path_log_prior,
    regret_vs_comparator,
    switch_distribution_codelength,
    transition_log_probs,
)
from .readout import (
    DivergedExpertError,
    Hyperparameters,
    ReadoutArchitecture,
    init_expert,
    loss_and_gradient,
    predict_log_probs,
    sgd_step,
)
from .trainer import ExpertSpec, ReplayStreamSet, TrainerConfig, expert_grid, run_online, run_stage1
from .expfam import (
    ExpFamExpert,
    RegretExperiment,
    best_path_codelength,
    hindsight_best_codelength,
    run_regret_experiment,
)
from .ranking import ScoreTable, average_rank, nemenyi_critical_difference, significance_matrix, summarize
from .fileio import read_feature_file, read_loss_matrix, write_feature_file, write_loss_matrix
