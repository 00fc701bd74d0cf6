"""Active PC-Kriging reliability analysis over multiple limit states."""

from .active import (
    ExperimentalDesign, RunRecord, StepRecord, StrategySpec,
    choose_target, run_active_learning, select_candidate, u_score, u_scores,
)
from .bench import (
    StudyReport, analytic_problem, build_problem, compute_truth,
    external_limit_state, g1, g2, ground_truth_beta, run_study,
)
from .config import StudyConfig, load_config, parse_config
from .correction import CorrectionField, build_correction, corrected_variance
from .pck import (
    KernelSpec, PckModel, Prediction, fit, fit_given, load_model,
    loo_diagnostics, matern52, predict, predict_batch, save_model, select_model,
)
from .pcebasis import MultiIndexSet, PceBasis, build_index_set, design_matrix, eval_basis
from .probspace import (
    RandomInput, SamplePool, from_standard, norm_cdf, norm_ppf,
    sample_lhs, sample_mc, to_standard,
)
from .reliability import (
    LimitState, ReliabilityEstimate, combined_error, delta_beta,
    estimate_probability, relative_beta_error, surrogate_probability,
)

__version__ = "0.1.0"
