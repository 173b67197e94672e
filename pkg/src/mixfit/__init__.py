"""Mixture-model estimation on Riemannian parameter manifolds."""

__version__ = "0.1.0"

from .distributions import DataBatch, Gaussian, GaussianParams, PenalizerHyper  # noqa: E402
from .estimation import FitOptions, FitReport, StepSchedule, fit  # noqa: E402
from .mixture import Mixture, MixtureParams  # noqa: E402
from .selection import CsmOptions, aic, bic, csm_fit  # noqa: E402

__all__ = [
    "DataBatch",
    "Gaussian",
    "GaussianParams",
    "PenalizerHyper",
    "Mixture",
    "MixtureParams",
    "FitOptions",
    "FitReport",
    "StepSchedule",
    "fit",
    "CsmOptions",
    "aic",
    "bic",
    "csm_fit",
]
