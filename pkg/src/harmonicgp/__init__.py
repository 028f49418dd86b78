"""Harmonic kernel decomposition and decomposed variational GP models.

A kernel that is invariant to a cyclic input transformation splits into
frequency parts: positive-semidefinite kernels that sum back to the
original and whose function spaces are mutually orthogonal.  This
package computes those parts, builds sparse variational GP models with
one independent inducing group per part, and ships the training,
diagnostic, and command-line machinery around them.
"""

from . import autodiff, backend, data, diagnostics, hkd, kernels, training, transforms
from .errors import (
    CommutativityError,
    ConfigError,
    InvarianceError,
    NumericalError,
    ParameterError,
    PeriodError,
    ShapeError,
    TrainingError,
)
from .gp import (
    BernoulliLikelihood,
    GaussianLikelihood,
    HvgpModel,
    SvgpModel,
    build_hvgp,
    build_svgp,
    elbo,
    elbo_grad,
    exact_gp_posterior,
    log_evidence,
    model_from_checkpoint,
    predict,
    to_checkpoint,
)
from .hkd import complex_decomposition, real_decomposition
from .kernels import circle_toy, matern32, polynomial, rbf
from .seeding import seed_stream
from .training import TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "autodiff", "backend", "data", "diagnostics", "hkd", "kernels",
    "training", "transforms",
    "CommutativityError", "ConfigError", "InvarianceError", "NumericalError",
    "ParameterError", "PeriodError", "ShapeError", "TrainingError",
    "BernoulliLikelihood", "GaussianLikelihood", "HvgpModel", "SvgpModel",
    "build_hvgp", "build_svgp", "elbo", "elbo_grad", "exact_gp_posterior",
    "log_evidence", "model_from_checkpoint", "predict", "to_checkpoint",
    "complex_decomposition", "real_decomposition",
    "circle_toy", "matern32", "polynomial", "rbf",
    "seed_stream", "TrainConfig", "fit",
]
