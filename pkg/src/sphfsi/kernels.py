"""Quintic spline smoothing kernel.

The kernel weights all pairwise interactions of the particle solver.  It is
compactly supported on ``r < 3h`` and normalized so that its integral over
1, 2 or 3 dimensions equals one:

    W(r, h) = sigma * f(q),   q = r / h

    f(q) = (3-q)^5 - 6(2-q)^5 + 15(1-q)^5    0 <= q < 1
           (3-q)^5 - 6(2-q)^5                1 <= q < 2
           (3-q)^5                           2 <= q < 3
           0                                 q >= 3

with sigma = 1/(120 h) in 1D, 7/(478 pi h^2) in 2D and 1/(120 pi h^3) in 3D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SUPPORT_SCALE = 3.0


def _sigma(h: float, dim: int) -> float:
    if dim == 1:
        return 1.0 / (120.0 * h)
    if dim == 2:
        return 7.0 / (478.0 * math.pi * h * h)
    if dim == 3:
        return 1.0 / (120.0 * math.pi * h ** 3)
    raise ValueError(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class SmoothingKernel:
    """Quintic spline kernel with smoothing length ``h`` in ``dim`` dimensions.

    The support radius is ``kappa * h`` with ``kappa = 3``; the kernel and its
    radial derivative vanish there exactly.
    """

    h: float
    dim: int = 2
    kappa: float = field(default=SUPPORT_SCALE, init=False)

    def __post_init__(self):
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError(f"smoothing length must be positive, got {self.h}")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")

    @property
    def support_radius(self) -> float:
        return self.kappa * self.h

    @property
    def sigma(self) -> float:
        return _sigma(self.h, self.dim)

    def __call__(self, r):
        return self.evaluate(r)

    def evaluate(self, r):
        """Kernel value W(r, h); accepts scalars or arrays, r >= 0."""
        r = np.asarray(r, dtype=np.float64)
        if not np.all(np.isfinite(r)) or np.any(r < 0.0):
            raise ValueError("kernel distance must be finite and non-negative")
        out = quintic_value(r, self.h, self.dim)
        return float(out) if out.ndim == 0 else out

    def evaluate_derivative(self, r):
        """Radial derivative dW/dr; zero at r = 0 and for r >= 3h."""
        r = np.asarray(r, dtype=np.float64)
        if not np.all(np.isfinite(r)) or np.any(r < 0.0):
            raise ValueError("kernel distance must be finite and non-negative")
        out = quintic_derivative(r, self.h, self.dim)
        return float(out) if out.ndim == 0 else out

    def self_value(self) -> float:
        """W(0, h), the self contribution in the density summation."""
        # f(0) = 3^5 - 6*2^5 + 15 = 66
        return 66.0 * self.sigma


def quintic_value(r, h, dim):
    """Vectorized quintic spline evaluation (no input validation)."""
    q = np.asarray(r, dtype=np.float64) / h
    q3 = np.clip(3.0 - q, 0.0, None)
    q2 = np.clip(2.0 - q, 0.0, None)
    q1 = np.clip(1.0 - q, 0.0, None)
    f = q3 ** 5 - 6.0 * q2 ** 5 + 15.0 * q1 ** 5
    return _sigma(h, dim) * f


def quintic_derivative(r, h, dim):
    """Vectorized radial derivative dW/dr of the quintic spline."""
    q = np.asarray(r, dtype=np.float64) / h
    q3 = np.clip(3.0 - q, 0.0, None)
    q2 = np.clip(2.0 - q, 0.0, None)
    q1 = np.clip(1.0 - q, 0.0, None)
    fp = -5.0 * q3 ** 4 + 30.0 * q2 ** 4 - 75.0 * q1 ** 4
    return _sigma(h, dim) / h * fp
