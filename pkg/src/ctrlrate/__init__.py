"""Likelihood inference on the slope of a control rate regression.

The observed log event rates of each study, (eta_hat, xi_hat), are modelled
as bivariate normal around latent rates with a known within-study
covariance, and the treated-arm rate depends linearly on the control-arm
rate. The package provides WLS and maximum likelihood fits, the signed
profile likelihood root r_P, Skovgaard's second-order statistic rbar_P,
confidence intervals, and a coverage simulation harness.
"""
__version__ = "0.1.0"

from .data import Dataset, DataError, StudyCounts, StudyObservation, hoes_dataset, load_csv
from .estimation import FitResult, fit_constrained, fit_mle, wls_fit
from .likelihood import Theta, expected_info, loglik, observed_info, score
from .optimize import OptimizerConfig
from .skovgaard import (ConfidenceInterval, ProfileAnalysis, TestReport, confint_beta1,
                        q_vector, s_matrix, test_beta1, u_correction)

__all__ = [
    "ConfidenceInterval", "DataError", "Dataset", "FitResult", "OptimizerConfig",
    "ProfileAnalysis", "StudyCounts", "StudyObservation", "TestReport", "Theta",
    "confint_beta1", "expected_info", "fit_constrained", "fit_mle", "hoes_dataset",
    "load_csv", "loglik", "observed_info", "q_vector", "s_matrix", "score", "test_beta1",
    "u_correction", "wls_fit",
]
