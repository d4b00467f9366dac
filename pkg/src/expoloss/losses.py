"""Margin losses and their e-exponentiated versions with analytic gradients.

The transformed loss is ``l(sigma(score), y)``. Binary losses take labels in
{-1, +1}; the softmax cross-entropy takes class indices and squashes every
logit before the softmax.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .transform import TransformParams, sigma, sigma_deriv, sigma_inverse


class Base(str, enum.Enum):
    LOGISTIC = "logistic"
    HINGE = "hinge"
    SOFTMAX = "softmax"


@dataclass(frozen=True)
class LossSpec:
    base: Base = Base.LOGISTIC
    transform: TransformParams = field(default_factory=lambda: TransformParams(e=1.0))

    def __post_init__(self):
        object.__setattr__(self, "base", Base(self.base))

    @property
    def binary(self) -> bool:
        return self.base is not Base.SOFTMAX

    def with_e(self, e: float) -> "LossSpec":
        return LossSpec(self.base, self.transform.with_e(e))

    def untransformed(self) -> "LossSpec":
        return self.with_e(1.0)


@dataclass(frozen=True)
class LossEval:
    value: float
    grad_wrt_scores: np.ndarray


def loss_at_zero(base: Base | str, n_classes: int = 2) -> float:
    """Exact ``l(0, y)``, usable as the constant C_l of the risk bounds."""
    base = Base(base)
    if base is Base.LOGISTIC:
        return math.log(2.0)
    if base is Base.HINGE:
        return 1.0
    return math.log(n_classes)


def loss_lipschitz(spec: LossSpec) -> float:
    """Lipschitz constant of the transformed loss in the raw score.

    Product of the base loss constant (1 for logistic and hinge, sqrt(2) for
    softmax cross-entropy in the l2 norm of the logits) and the largest slope
    of sigma.
    """
    base_const = math.sqrt(2.0) if spec.base is Base.SOFTMAX else 1.0
    return base_const * spec.transform.inner_slope


def hinge_kink(y: int, p: TransformParams) -> float:
    """Raw score where ``1 - y * sigma(score)`` crosses zero."""
    return y * sigma_inverse(1.0, p)


def _check_binary_labels(y: np.ndarray) -> None:
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("binary losses need labels in {-1, +1}")


def binary_loss_batch(spec: LossSpec, scores, labels):
    """Per-sample values and d loss / d score for a binary margin loss."""
    if not spec.binary:
        raise ValueError(f"{spec.base.value} is not a binary loss")
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    _check_binary_labels(y)
    p = spec.transform
    z = y * sigma(s, p)
    if spec.base is Base.LOGISTIC:
        value = np.logaddexp(0.0, -z)
        dl_dsig = -y * expit(-z)
    else:
        slack = 1.0 - z
        value = np.maximum(0.0, slack)
        dl_dsig = np.where(slack > 0.0, -y, 0.0).astype(float)
    return value, dl_dsig * sigma_deriv(s, p)


def softmax_ce_batch(spec: LossSpec, logits, labels):
    """Per-sample values and gradients w.r.t. raw logits, shape (N, K)."""
    if spec.base is not Base.SOFTMAX:
        raise ValueError(f"{spec.base.value} is not the softmax loss")
    x = np.atleast_2d(np.asarray(logits, dtype=float))
    y = np.asarray(labels).reshape(-1)
    n, k = x.shape
    if k < 2:
        raise ValueError("softmax cross-entropy needs K >= 2")
    if y.shape[0] != n:
        raise ValueError(f"{n} logit rows but {y.shape[0]} labels")
    if np.any((y < 0) | (y >= k)) or not np.all(y == np.floor(y)):
        raise ValueError(f"class index out of range for K={k}")
    y = y.astype(int)
    p = spec.transform
    s = sigma(x, p)
    lse = logsumexp(s, axis=1)
    rows = np.arange(n)
    value = lse - s[rows, y]
    dl_ds = np.exp(s - lse[:, None])
    dl_ds[rows, y] -= 1.0
    return value, dl_ds * sigma_deriv(x, p)


def loss_batch(spec: LossSpec, scores, labels):
    if spec.binary:
        return binary_loss_batch(spec, scores, labels)
    return softmax_ce_batch(spec, scores, labels)


def binary_loss(spec: LossSpec, yhat: float, y: int) -> LossEval:
    if not np.isfinite(yhat):
        raise ValueError("score must be finite")
    if y not in (-1, 1):
        raise ValueError(f"binary label must be -1 or +1, got {y}")
    value, grad = binary_loss_batch(spec, np.array([yhat]), np.array([y]))
    return LossEval(float(value[0]), grad)


def softmax_ce_loss(spec: LossSpec, logits, y: int) -> LossEval:
    value, grad = softmax_ce_batch(spec, np.asarray(logits, dtype=float)[None, :], np.array([y]))
    return LossEval(float(value[0]), grad[0])


def empirical_risk(spec: LossSpec, model_scores, labels) -> float:
    """Mean transformed loss over a sample."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empirical risk of an empty sample is undefined")
    value, _ = loss_batch(spec, model_scores, labels)
    return float(np.mean(value))
