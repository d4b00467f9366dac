"""Piecewise power squashing of classifier scores.

``sigma`` maps a raw score ``y`` to ``sign(y) |y|**e`` when ``|y| >= c`` and to
the linear segment ``c**(e-1) * y`` inside ``(-c, c)``. Both branches meet
continuously at ``|y| = c``. With ``e = 1`` the map is the identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TransformParams:
    e: float = 1.0
    c: float = 0.005
    grad_cap: float = 1e6

    def __post_init__(self):
        if not (0.0 <= self.e <= 1.0):
            raise ValueError(f"exponent e must lie in [0, 1], got {self.e}")
        if not (self.c >= 0.0 and np.isfinite(self.c)):
            raise ValueError(f"crossover c must be finite and >= 0, got {self.c}")
        if not self.grad_cap > 0.0:
            raise ValueError(f"grad_cap must be > 0, got {self.grad_cap}")
        if self.c > 0.0:
            try:
                math.pow(self.c, self.e - 1.0)
            except OverflowError:
                raise ValueError(f"c = {self.c} makes the inner slope c**(e-1) overflow") from None

    @property
    def is_identity(self) -> bool:
        return self.e == 1.0

    @property
    def inner_slope(self) -> float:
        """Slope of the linear segment, ``c**(e-1)`` (capped when ``c = 0``)."""
        if self.is_identity:
            return 1.0
        if self.c == 0.0:
            return self.grad_cap
        return float(self.c ** (self.e - 1.0))

    def with_e(self, e: float) -> "TransformParams":
        return TransformParams(e=e, c=self.c, grad_cap=self.grad_cap)


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError("sigma is only defined for finite scores")


def _magnitude(a: np.ndarray, p: TransformParams) -> np.ndarray:
    # a >= 0; returns sigma(a)
    if p.is_identity:
        return a.copy()
    if p.c == 0.0:
        return a ** p.e
    out = np.empty_like(a)
    outer = a >= p.c
    out[outer] = a[outer] ** p.e
    out[~outer] = (p.c ** (p.e - 1.0)) * a[~outer]
    return out


def sigma(yhat, p: TransformParams):
    """Apply the e-exponentiated squashing map elementwise.

    Accepts scalars or arrays; returns the same kind. Oddness is exact because
    the magnitude is transformed first and the sign reattached afterwards.
    """
    x = np.asarray(yhat, dtype=float)
    _check_finite(x)
    a = np.abs(x)
    out = np.copysign(_magnitude(np.atleast_1d(a), p).reshape(a.shape), x)
    # copysign(0, -0.0) gives -0.0; keep zero unsigned
    out = np.where(x == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def sigma_deriv(yhat, p: TransformParams):
    """Derivative of :func:`sigma`.

    At ``|y| = c`` the linear-segment slope ``c**(e-1)`` is returned. For
    ``c = 0`` the derivative at the origin is 0 and every value is capped at
    ``p.grad_cap``.
    """
    x = np.asarray(yhat, dtype=float)
    _check_finite(x)
    a = np.atleast_1d(np.abs(x))
    if p.is_identity:
        out = np.ones_like(a)
    elif p.c == 0.0:
        out = np.zeros_like(a)
        # e = 0 makes sigma a step function: slope 0 off the origin
        nz = (a > 0.0) & (p.e > 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            out[nz] = np.minimum(p.e * a[nz] ** (p.e - 1.0), p.grad_cap)
    else:
        out = np.full_like(a, p.c ** (p.e - 1.0))
        outer = a > p.c
        out[outer] = p.e * a[outer] ** (p.e - 1.0)
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def sigma_inverse(value: float, p: TransformParams) -> float:
    """Inverse of :func:`sigma` for ``e > 0`` (used to locate loss kinks)."""
    if p.e == 0.0:
        raise ValueError("sigma is not invertible for e = 0")
    v = abs(float(value))
    if p.is_identity:
        a = v
    elif p.c > 0.0 and v < p.c ** p.e:
        a = v / p.c ** (p.e - 1.0)
    else:
        a = v ** (1.0 / p.e)
    return float(np.copysign(a, value))
