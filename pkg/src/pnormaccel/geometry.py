"""l_p geometry kernel: norms, dual norms, Bregman divergence of ||.||_p^p,
and the coordinate-wise quadratic/p-power sandwich bounds on that divergence.

All functions are pure and operate on 1-d float arrays.  Conventions:

* ``|t|^e`` with ``t = 0, e = 0`` evaluates to 1 (so the curvature weights
  ``r_i = |x_i|^(p-2)`` are identically 1 at p = 2).
* norms and p-th powers are computed with max-rescaling so that large p does
  not overflow naive evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PNormParams",
    "as_vector",
    "pnorm",
    "pnorm_pow",
    "dual_norm",
    "signed_pow",
    "abs_pow",
    "grad_pnorm_pow",
    "bregman",
    "bregman_bounds",
    "mirror_argmin",
]


def as_vector(x) -> np.ndarray:
    """Validate and coerce to a finite 1-d float array."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


@dataclass(frozen=True)
class PNormParams:
    """Geometry parameters (p, s, lam).

    ``p`` is the norm index (>= 2), ``s`` the proximal power (> p, may be
    ``math.inf`` for ball-oracle mode), and ``lam`` the proximal scale --
    or the ball radius r when ``s`` is infinite.
    """

    p: float
    s: float
    lam: float
    nu: float = field(init=False)

    def __post_init__(self):
        if not (self.p >= 2.0):
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not (self.s > self.p):
            raise ValueError(f"s must exceed p, got s={self.s}, p={self.p}")
        if not (self.lam > 0.0):
            raise ValueError(f"lam must be positive, got {self.lam}")
        object.__setattr__(self, "nu", 1.0 / self.p - (0.0 if math.isinf(self.s) else 1.0 / self.s))

    @property
    def ball_mode(self) -> bool:
        return math.isinf(self.s)

    @property
    def radius(self) -> float:
        if not self.ball_mode:
            raise ValueError("radius is only defined in ball mode (s = inf)")
        return self.lam


def pnorm(x, p: float) -> float:
    """||x||_p for p >= 1, including p = inf (max norm)."""
    v = as_vector(x)
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    if v.size == 0:
        return 0.0
    m = float(np.max(np.abs(v)))
    if m == 0.0:
        return 0.0
    if math.isinf(p):
        return m
    if p == 1.0:
        return float(np.sum(np.abs(v)))
    if p == 2.0:
        return float(np.linalg.norm(v))
    return m * float(np.sum((np.abs(v) / m) ** p)) ** (1.0 / p)


def pnorm_pow(x, p: float) -> float:
    """||x||_p^p, max-rescaled against overflow."""
    v = as_vector(x)
    if v.size == 0:
        return 0.0
    m = float(np.max(np.abs(v)))
    if m == 0.0:
        return 0.0
    if p == 2.0:
        return float(np.dot(v, v))
    return m**p * float(np.sum((np.abs(v) / m) ** p))


def dual_norm(g, p: float) -> float:
    """||g||_q with q = p/(p-1), the dual of ||.||_p for p >= 2."""
    if p < 2.0:
        raise ValueError(f"dual_norm expects p >= 2, got {p}")
    if math.isinf(p):
        return pnorm(g, 1.0)
    return pnorm(g, p / (p - 1.0))


def signed_pow(v, e: float) -> np.ndarray:
    """Coordinate-wise sign(v) * |v|^e (e > 0); zero stays zero."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.abs(v) ** e


def abs_pow(v, e: float) -> np.ndarray:
    """Coordinate-wise |v|^e with the convention 0^0 = 1."""
    v = np.asarray(v, dtype=float)
    if e == 0.0:
        return np.ones_like(v)
    return np.abs(v) ** e


def grad_pnorm_pow(x, p: float) -> np.ndarray:
    """Gradient of x -> ||x||_p^p, i.e. p * |x_i|^(p-2) * x_i per coordinate."""
    v = as_vector(x)
    if p < 2.0:
        raise ValueError(f"grad_pnorm_pow expects p >= 2, got {p}")
    return p * signed_pow(v, p - 1.0)


def bregman(x, y, p: float) -> float:
    """Bregman divergence of d(x) = ||x||_p^p between x and y."""
    vx, vy = as_vector(x), as_vector(y)
    if vx.shape != vy.shape:
        raise ValueError(f"dimension mismatch: {vx.shape} vs {vy.shape}")
    return pnorm_pow(vx, p) - pnorm_pow(vy, p) - float(np.dot(grad_pnorm_pow(vy, p), vx - vy))


def bregman_bounds(x, delta, p: float) -> tuple[float, float]:
    """Two-sided bounds on bregman(x + delta, x, p) from the coordinate-wise
    curvature weights r_i = |x_i|^(p-2):

        (p/8) sum r_i d_i^2 + 2^-(p+1) ||d||_p^p
            <= divergence <=
        2 p^2 sum r_i d_i^2 + p^p ||d||_p^p
    """
    vx, vd = as_vector(x), as_vector(delta)
    if vx.shape != vd.shape:
        raise ValueError(f"dimension mismatch: {vx.shape} vs {vd.shape}")
    r = abs_pow(vx, p - 2.0)
    quad = float(np.dot(r, vd * vd))
    dp = pnorm_pow(vd, p)
    lower = (p / 8.0) * quad + dp / 2.0 ** (p + 1.0)
    upper = 2.0 * p * p * quad + p**p * dp
    return lower, upper


def mirror_argmin(w, y0, p: float) -> np.ndarray:
    """Closed-form argmin_z <w, z> + bregman(z, y0, p).

    Stationarity gives p|z|^(p-2) z = p|y0|^(p-2) y0 - w, solved per
    coordinate by inverting t -> |t|^(p-2) t.
    """
    vw, v0 = as_vector(w), as_vector(y0)
    if vw.shape != v0.shape:
        raise ValueError(f"dimension mismatch: {vw.shape} vs {v0.shape}")
    u = grad_pnorm_pow(v0, p) - vw
    return signed_pow(u / p, 1.0 / (p - 1.0))
