"""Bayesian prediction-powered inference: credible intervals for proxy
estimands that combine a few human labels with many autorater labels."""
from .engine import EngineConfig, IntervalResult, bootstrap, equal_tailed, integrate
from .estimators import (
    EstimandReport,
    PowerTuneParams,
    chain_rule_abstain,
    chain_rule_estimate,
    classical_mean,
    classical_proportion,
    difference_estimate,
    estimate_lambda,
    stratified_estimate,
    sxs_classical_paired,
    sxs_estimate,
)
from .posterior import fit_kproportion, fit_mean, fit_proportion

__version__ = "0.1.0"
