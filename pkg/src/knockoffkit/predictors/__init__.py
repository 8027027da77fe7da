"""Supervised models used to produce importance scores."""
from .lasso import LassoGlmFit, fit_lasso, kkt_residual
from .logistic import LogisticModel, SeparationError, fit_logistic
from .mlp import MlpModel, TrainingDivergedError, fit_mlp, integrated_gradients


class CapabilityError(TypeError):
    """The predictor lacks a requested capability (e.g. input gradients)."""


def input_gradient(model, x, cls=None):
    if not getattr(model, "has_gradients", False):
        raise CapabilityError(f"{type(model).__name__} does not provide input gradients")
    return model.input_gradient(x, cls)


__all__ = [
    "LassoGlmFit",
    "fit_lasso",
    "kkt_residual",
    "LogisticModel",
    "SeparationError",
    "fit_logistic",
    "MlpModel",
    "TrainingDivergedError",
    "fit_mlp",
    "integrated_gradients",
    "input_gradient",
    "CapabilityError",
]
