"""Random forests with PAC-Bayesian bounds on the majority vote."""

from .bound_math import XiMode, kl_bernoulli, kl_inv_lower, kl_inv_upper, kl_trivalent, trivalent_cbound_sup, xi
from .bounds import BoundName, BoundReport, aligned_cbound, c1_bound, c2_bound, cbound_oracle, lambda_bound, pbkl, sh_bound
from .data import load_dataset
from .errors import ConfigurationError, DataError, InfeasibleMomentError, NumericError
from .experiments import ExperimentConfig, Setting, SplitPlan, make_split, run_experiment, run_sweep
from .forest import Dataset, Ensemble, SplitFeatureMode, TreeConfig, train_forest
from .optimize import optimize_cbound, optimize_lambda, select_mu, self_complement
from .posterior import PosteriorWeights, Provenance
from .stats import EvalMode, OobStatistics, collect_statistics

__all__ = [
    "BoundName", "BoundReport", "ConfigurationError", "DataError", "Dataset", "Ensemble", "EvalMode",
    "ExperimentConfig", "InfeasibleMomentError", "NumericError", "OobStatistics", "PosteriorWeights",
    "Provenance", "Setting", "SplitFeatureMode", "SplitPlan", "TreeConfig", "XiMode", "aligned_cbound",
    "c1_bound", "c2_bound", "cbound_oracle", "collect_statistics", "kl_bernoulli", "kl_inv_lower",
    "kl_inv_upper", "kl_trivalent", "lambda_bound", "load_dataset", "make_split", "optimize_cbound",
    "optimize_lambda", "pbkl", "run_experiment", "run_sweep", "select_mu", "self_complement", "sh_bound",
    "train_forest", "trivalent_cbound_sup", "xi",
]
