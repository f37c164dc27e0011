"""Bayesian estimation of jointly sparse spiked covariance matrices."""

from .estimators import (
    PosteriorSummary,
    SpikedCovarianceMSSL,
    aligned_subspace_draws,
    credible_intervals,
    estimate_rank,
    key_features,
    summarize,
)
from .linalg import (
    CsDecomp,
    cs_decompose,
    frobenius_alignment,
    inf_norm,
    op_norm,
    projection_distance,
    sym_eig_topk,
    two_to_inf_loss,
    two_to_inf_norm,
    two_to_inf_projection_bound,
)
from .losses import LossReport, compute_losses
from .prior import (
    MsslHyper,
    PriorDraw,
    double_gamma_logpdf,
    generalized_support,
    row_log_prior,
    sample_prior,
    support_tail_stats,
)
from .sampler import ChainSamples, ChainState, McmcConfig, run_chain
from .simulate import SpikedCovModel, generate_truth, motivating_pair, sample_data

__version__ = "0.1.0"

__all__ = [
    "ChainSamples",
    "ChainState",
    "CsDecomp",
    "LossReport",
    "McmcConfig",
    "MsslHyper",
    "PosteriorSummary",
    "PriorDraw",
    "SpikedCovModel",
    "SpikedCovarianceMSSL",
    "aligned_subspace_draws",
    "compute_losses",
    "credible_intervals",
    "cs_decompose",
    "double_gamma_logpdf",
    "estimate_rank",
    "frobenius_alignment",
    "generalized_support",
    "generate_truth",
    "inf_norm",
    "key_features",
    "motivating_pair",
    "op_norm",
    "projection_distance",
    "row_log_prior",
    "run_chain",
    "sample_data",
    "sample_prior",
    "summarize",
    "support_tail_stats",
    "sym_eig_topk",
    "two_to_inf_loss",
    "two_to_inf_norm",
    "two_to_inf_projection_bound",
]
