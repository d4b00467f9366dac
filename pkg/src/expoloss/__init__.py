"""e-exponentiated loss transformation for label-noise-robust classification."""

__version__ = "0.1.0"

from .transform import TransformParams, sigma, sigma_deriv  # noqa: E402
from .losses import Base, LossSpec, LossEval, binary_loss, softmax_ce_loss, empirical_risk  # noqa: E402

__all__ = [
    "TransformParams", "sigma", "sigma_deriv",
    "Base", "LossSpec", "LossEval", "binary_loss", "softmax_ce_loss", "empirical_risk",
]
