"""Bayesian copula-based bivariate beta-binomial models for meta-analysis of diagnostic test accuracy."""

__version__ = "0.1.0"

from .copulas import CopulaFamily, cdf, density, kendall_tau, log_density, spearman_rho
from .data import Dataset, StudyRecord, builtin_dataset, design_matrix, parse_csv
from .diagnostics import ess, mcse, split_rhat
from .estimator import DTAMetaAnalysis
from .models import ModelSpec, PriorConfig, build_model
from .sampler import ChainConfig, run_chains
from .summaries import FitSummary, WaicResult, compare, exact_ci, summarize, waic

__all__ = [
    "ChainConfig",
    "CopulaFamily",
    "DTAMetaAnalysis",
    "Dataset",
    "FitSummary",
    "ModelSpec",
    "PriorConfig",
    "StudyRecord",
    "WaicResult",
    "build_model",
    "builtin_dataset",
    "cdf",
    "compare",
    "density",
    "design_matrix",
    "ess",
    "exact_ci",
    "kendall_tau",
    "log_density",
    "mcse",
    "parse_csv",
    "run_chains",
    "spearman_rho",
    "split_rhat",
    "summarize",
    "waic",
]
