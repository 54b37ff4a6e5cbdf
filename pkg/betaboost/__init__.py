"""
betaboost: Type II error tables and sparsity-boosted structure scoring.

Computes beta values of the mutual-information independence test exactly
and by Monte Carlo integration, tabulates them for lookup, and uses them to
reward absent edges when scoring Bayesian network structures.
"""

__version__ = "0.1.0"

from betaboost.betatable import BetaTable, build_table, interpolate_log_beta
from betaboost.bayesnet import BayesNet, Dag, EmpiricalCounts
from betaboost.config import Config, load_config
from betaboost.errors import BetaboostError, DomainError, TableFormatError
from betaboost.score import ScoreConfig, learn, score
from betaboost.stepcdf import StepCdf, exact_beta_cdf

__all__ = [
    "BetaTable",
    "build_table",
    "interpolate_log_beta",
    "BayesNet",
    "Dag",
    "EmpiricalCounts",
    "Config",
    "load_config",
    "BetaboostError",
    "DomainError",
    "TableFormatError",
    "ScoreConfig",
    "learn",
    "score",
    "StepCdf",
    "exact_beta_cdf",
]
