"""Convex objective handles consumed by the oracle solvers and outer loops.

Every objective exposes ``value``/``gradient`` (a subgradient where the
function is nonsmooth); smooth ones also expose ``hessian``.  Objectives with
polynomial structure expose ``taylor_gradient``/``taylor_hessian`` for the
Taylor-model oracle.  The ``smoothness`` tag drives solver dispatch:
``smooth`` (Newton), ``piecewise-linear-max`` (structured/epigraph), or
``composite-regression`` (handled inside the regression module).
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import as_vector, pnorm, signed_pow

__all__ = [
    "Objective",
    "LinearObjective",
    "QuadraticObjective",
    "PNormPowerObjective",
    "SeparablePolynomial",
    "SumObjective",
    "MaxAffineObjective",
    "MaxOfObjectives",
]


class Objective:
    """Base convex objective on R^dim."""

    smoothness = "smooth"

    def __init__(self, dim: int):
        self.dim = int(dim)

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    def has_hessian(self) -> bool:
        try:
            self.hessian(np.zeros(self.dim))
            return True
        except NotImplementedError:
            return False

    def taylor_gradient(self, y, x, order: int) -> np.ndarray:
        """Gradient (in y) of the order-``order`` Taylor polynomial of the
        function around x."""
        raise NotImplementedError

    def taylor_hessian(self, y, x, order: int) -> np.ndarray:
        raise NotImplementedError


class LinearObjective(Objective):
    """f(x) = <g, x> + c."""

    def __init__(self, g, c: float = 0.0):
        g = as_vector(g)
        super().__init__(g.size)
        self.g = g
        self.c = float(c)

    def value(self, x):
        return float(np.dot(self.g, as_vector(x))) + self.c

    def gradient(self, x):
        return self.g.copy()

    def hessian(self, x):
        return np.zeros((self.dim, self.dim))

    def taylor_gradient(self, y, x, order):
        return self.g.copy()

    def taylor_hessian(self, y, x, order):
        return np.zeros((self.dim, self.dim))


class QuadraticObjective(Objective):
    """f(x) = (1/2) x^T H x + <g, x> + c with H symmetric PSD."""

    def __init__(self, H, g=None, c: float = 0.0):
        H = np.asarray(H, dtype=float)
        super().__init__(H.shape[0])
        self.H = 0.5 * (H + H.T)
        self.g = np.zeros(self.dim) if g is None else as_vector(g)
        self.c = float(c)

    @classmethod
    def shifted_sqnorm(cls, center, weight: float = 1.0):
        """weight * ||x - center||_2^2."""
        center = as_vector(center)
        d = center.size
        H = 2.0 * weight * np.eye(d)
        g = -2.0 * weight * center
        c = weight * float(np.dot(center, center))
        return cls(H, g, c)

    def value(self, x):
        v = as_vector(x)
        return 0.5 * float(v @ self.H @ v) + float(np.dot(self.g, v)) + self.c

    def gradient(self, x):
        return self.H @ as_vector(x) + self.g

    def hessian(self, x):
        return self.H.copy()

    def taylor_gradient(self, y, x, order):
        # order >= 2 reproduces the quadratic exactly
        if order >= 2:
            return self.gradient(y)
        x = as_vector(x)
        return self.gradient(x)

    def taylor_hessian(self, y, x, order):
        if order >= 2:
            return self.H.copy()
        return np.zeros((self.dim, self.dim))


class SeparablePolynomial(Objective):
    """f(x) = coeff * sum_i x_i^power for an even integer power."""

    def __init__(self, dim: int, power: int = 4, coeff: float = 1.0):
        super().__init__(dim)
        if power < 2 or power % 2 != 0:
            raise ValueError("power must be an even integer >= 2")
        self.power = int(power)
        self.coeff = float(coeff)

    def value(self, x):
        v = as_vector(x)
        return self.coeff * float(np.sum(v**self.power))

    def gradient(self, x):
        v = as_vector(x)
        return self.coeff * self.power * v ** (self.power - 1)

    def hessian(self, x):
        v = as_vector(x)
        return np.diag(self.coeff * self.power * (self.power - 1) * v ** (self.power - 2))

    def _coord_deriv(self, t: np.ndarray, k: int) -> np.ndarray:
        """k-th derivative of coeff * t^power, coordinate-wise."""
        m = self.power
        if k > m:
            return np.zeros_like(t)
        fac = self.coeff * math.perm(m, k)
        return fac * t ** (m - k)

    def taylor_gradient(self, y, x, order):
        y, x = as_vector(y), as_vector(x)
        h = y - x
        out = np.zeros_like(x)
        # derivative of the order-`order` Taylor polynomial is the
        # (order-1)-Taylor polynomial of the derivative
        for j in range(order):
            out += self._coord_deriv(x, j + 1) * h**j / math.factorial(j)
        return out

    def taylor_hessian(self, y, x, order):
        y, x = as_vector(y), as_vector(x)
        h = y - x
        diag = np.zeros_like(x)
        for j in range(order - 1):
            diag += self._coord_deriv(x, j + 2) * h**j / math.factorial(j)
        return np.diag(diag)


class PNormPowerObjective(Objective):
    """f(x) = coeff * ||x - center||_r^r for r >= 2 (separable power of a shift)."""

    def __init__(self, dim: int, r: float = 4.0, coeff: float = 1.0, center=None):
        super().__init__(dim)
        if r < 2:
            raise ValueError("r must be >= 2")
        self.r = float(r)
        self.coeff = float(coeff)
        self.center = np.zeros(dim) if center is None else as_vector(center)

    def value(self, x):
        v = as_vector(x) - self.center
        return self.coeff * float(np.sum(np.abs(v) ** self.r))

    def gradient(self, x):
        v = as_vector(x) - self.center
        return self.coeff * self.r * signed_pow(v, self.r - 1.0)

    def hessian(self, x):
        v = as_vector(x) - self.center
        return np.diag(self.coeff * self.r * (self.r - 1.0) * np.abs(v) ** (self.r - 2.0))


class SumObjective(Objective):
    """Pointwise sum of objectives on a common domain."""

    def __init__(self, parts):
        parts = list(parts)
        super().__init__(parts[0].dim)
        if any(p.dim != self.dim for p in parts):
            raise ValueError("all parts must share the same dimension")
        self.parts = parts

    def value(self, x):
        return sum(p.value(x) for p in self.parts)

    def gradient(self, x):
        g = np.zeros(self.dim)
        for p in self.parts:
            g += p.gradient(x)
        return g

    def hessian(self, x):
        H = np.zeros((self.dim, self.dim))
        for p in self.parts:
            H += p.hessian(x)
        return H


class MaxAffineObjective(Objective):
    """f(x) = max_i (<rows_i, x> + offsets_i); subgradient picks the smallest
    maximizing index (deterministic tie-break)."""

    smoothness = "piecewise-linear-max"

    def __init__(self, rows, offsets, tie_tol: float = 0.0):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        offsets = as_vector(offsets)
        if rows.shape[0] != offsets.size:
            raise ValueError("rows/offsets mismatch")
        super().__init__(rows.shape[1])
        self.rows = rows
        self.offsets = offsets
        self.tie_tol = float(tie_tol)

    def pieces(self, x) -> np.ndarray:
        return self.rows @ as_vector(x) + self.offsets

    def value(self, x):
        return float(np.max(self.pieces(x)))

    def argmax_index(self, x) -> int:
        vals = self.pieces(x)
        return int(np.argmax(vals))

    def gradient(self, x):
        return self.rows[self.argmax_index(x)].copy()

    def active_set(self, x, tol: float) -> np.ndarray:
        vals = self.pieces(x)
        return np.nonzero(vals >= np.max(vals) - tol)[0]


class MaxOfObjectives(Objective):
    """f(x) = max(f_1(x), ..., f_m(x)) of general convex pieces.

    In ties the subgradient comes from the earliest piece in the list."""

    smoothness = "piecewise-linear-max"

    def __init__(self, parts):
        parts = list(parts)
        super().__init__(parts[0].dim)
        self.parts = parts

    def value(self, x):
        return max(p.value(x) for p in self.parts)

    def gradient(self, x):
        vals = [p.value(x) for p in self.parts]
        i = int(np.argmax(vals))
        # argmax returns the first maximizer, i.e. earliest piece wins ties
        return self.parts[i].gradient(x)
