"""Generalized logit transform for power values bounded in [0, 1]."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TransformSpec:
    """Shape exponent ``nu`` and clipping margin ``eps`` of the transform."""

    nu: float = 1.0
    eps: float = 1e-3

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not 0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 0.5), got {self.eps}")


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")


def glogit_forward(y, spec=TransformSpec()):
    """Map normalized power onto the real line.

    Values are clamped to ``[eps, 1 - eps]`` before ``log(c**nu / (1 - c**nu))``
    is applied. Scalars in, scalars out; arrays are handled elementwise.
    """
    y = np.asarray(y, dtype=float)
    _check_finite(y, "y")
    c = np.clip(y, spec.eps, 1.0 - spec.eps) ** spec.nu
    out = np.log(c) - np.log1p(-c)
    return float(out) if out.ndim == 0 else out


def glogit_inverse(x, spec=TransformSpec()):
    """Inverse of :func:`glogit_forward`; the result lies in [0, 1]."""
    x = np.asarray(x, dtype=float)
    _check_finite(x, "x")
    # logistic via exp(-log1p(exp(-x))) keeps precision in both tails
    out = np.exp(-np.logaddexp(0.0, -x) / spec.nu)
    return float(out) if out.ndim == 0 else out
