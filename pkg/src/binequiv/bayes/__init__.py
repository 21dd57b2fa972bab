"""Bayesian distribution fitting, model selection and interval summaries."""

from .families import FAMILIES, DistributionFamily, get_family
from .hdi import Interval, hdi
from .loo import NoConvergedModelError, attach_loo, fit_and_select, loo_elpd, psis, select_model
from .sampler import (
    DegenerateDataError,
    FittedModel,
    LooResult,
    PosteriorDraw,
    SamplerConfig,
    UnsupportedDataError,
    fit_posterior,
    weighted_log_likelihood,
)

__all__ = [
    "FAMILIES",
    "DegenerateDataError",
    "DistributionFamily",
    "FittedModel",
    "Interval",
    "LooResult",
    "NoConvergedModelError",
    "PosteriorDraw",
    "SamplerConfig",
    "UnsupportedDataError",
    "attach_loo",
    "fit_and_select",
    "fit_posterior",
    "get_family",
    "hdi",
    "loo_elpd",
    "psis",
    "select_model",
    "weighted_log_likelihood",
]
