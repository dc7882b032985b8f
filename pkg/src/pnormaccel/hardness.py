"""Lower-bound hard instances: scaled coordinate-max functions whose
constrained proximal (and ball) oracles reveal at most one new coordinate
per query, plus the analytic gap floors they certify.

The finite-s instance on R^d with parameters (k, R, p, s, lam) is

    g_k(x) = beta_k * max_{1<=i<=k} (x_i - i * alpha_k),

minimized over ||x||_p <= R, with

    beta_k  = ((s-1)/s)^(2(s-1)) * s * lam * R^(s-1) / (k+1)^((p+1)(s-1)/p)
    alpha_k = (s-1) R / (s (k+1)^((p+1)/p))
            = (s/(s-1)) * (beta_k / (s lam))^(1/(s-1)).

The ball variant drops the beta scaling and uses offsets alpha = 4r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PNormParams, as_vector, pnorm
from .objectives import MaxAffineObjective, MaxOfObjectives, Objective
from . import oracles

__all__ = [
    "NemirovskiiInstance",
    "BallHardInstance",
    "ZeroChainReport",
    "make_nemirovskii",
    "make_ball_hard",
    "eval_g",
    "subgradient_g",
    "as_objective",
    "gap_floor",
    "terminal_gap_floor",
    "s_floor",
    "opt_ceiling",
    "ball_gap_floor",
    "constrained_prox_oracle",
    "constrained_ball_oracle",
    "verify_zero_chain",
    "reference_constrained_opt",
    "make_unconstrained",
]


@dataclass(frozen=True)
class NemirovskiiInstance:
    k: int
    d: int
    R: float
    p: float
    s: float
    lam: float
    beta_k: float = field(init=False)
    alpha_k: float = field(init=False)

    def __post_init__(self):
        if not (1 <= self.k <= self.d):
            raise ValueError("need 1 <= k <= d")
        if not (2 <= self.p < self.s) or math.isinf(self.s):
            raise ValueError("need 2 <= p < s < inf")
        if self.R <= 0 or self.lam <= 0:
            raise ValueError("R and lam must be positive")
        k, R, p, s, lam = self.k, self.R, self.p, self.s, self.lam
        beta = ((s - 1.0) / s) ** (2.0 * (s - 1.0)) * s * lam * R ** (s - 1.0) \
            / (k + 1.0) ** ((p + 1.0) * (s - 1.0) / p)
        alpha = (s - 1.0) * R / (s * (k + 1.0) ** ((p + 1.0) / p))
        alpha_alt = (s / (s - 1.0)) * (beta / (s * lam)) ** (1.0 / (s - 1.0))
        if abs(alpha - alpha_alt) > 1e-10 * alpha:
            raise AssertionError("alpha closed forms disagree")
        object.__setattr__(self, "beta_k", beta)
        object.__setattr__(self, "alpha_k", alpha)

    @property
    def params(self) -> PNormParams:
        return PNormParams(self.p, self.s, self.lam)


@dataclass(frozen=True)
class BallHardInstance:
    k: int
    d: int
    R: float
    r: float
    p: float
    alpha: float = field(init=False)

    def __post_init__(self):
        if not (1 <= self.k <= self.d):
            raise ValueError("need 1 <= k <= d")
        if self.R <= 0 or self.r <= 0 or self.p < 2:
            raise ValueError("need R, r > 0 and p >= 2")
        object.__setattr__(self, "alpha", 4.0 * self.r)


def make_nemirovskii(k, d, R, p, s, lam) -> NemirovskiiInstance:
    return NemirovskiiInstance(int(k), int(d), float(R), float(p), float(s), float(lam))


def make_ball_hard(k, d, R, r, p) -> BallHardInstance:
    return BallHardInstance(int(k), int(d), float(R), float(r), float(p))


def _offsets(inst) -> np.ndarray:
    if isinstance(inst, NemirovskiiInstance):
        return -inst.beta_k * inst.alpha_k * np.arange(1, inst.k + 1)
    return -inst.alpha * np.arange(1, inst.k + 1)


def _slope(inst) -> float:
    return inst.beta_k if isinstance(inst, NemirovskiiInstance) else 1.0


def as_objective(inst) -> MaxAffineObjective:
    """The instance's max-affine objective on R^d."""
    beta = _slope(inst)
    rows = np.zeros((inst.k, inst.d))
    rows[np.arange(inst.k), np.arange(inst.k)] = beta
    return MaxAffineObjective(rows, _offsets(inst))


def eval_g(inst, x) -> float:
    x = as_vector(x)
    if x.size != inst.d:
        raise ValueError("dimension mismatch")
    beta = _slope(inst)
    alpha = inst.alpha_k if isinstance(inst, NemirovskiiInstance) else inst.alpha
    idx = np.arange(1, inst.k + 1)
    return beta * float(np.max(x[: inst.k] - idx * alpha))


def subgradient_g(inst, x) -> np.ndarray:
    x = as_vector(x)
    beta = _slope(inst)
    alpha = inst.alpha_k if isinstance(inst, NemirovskiiInstance) else inst.alpha
    idx = np.arange(1, inst.k + 1)
    i_star = int(np.argmax(x[: inst.k] - idx * alpha))  # smallest maximizer
    g = np.zeros(inst.d)
    g[i_star] = beta
    return g


def gap_floor(inst: NemirovskiiInstance, i: int) -> float:
    """Analytic lower bound on the optimality gap of any ball-feasible point
    supported on the first i coordinates (valid for i < k)."""
    if i > inst.k:
        raise ValueError("i must be <= k")
    return inst.beta_k * inst.R / (i + 1.0) ** (1.0 / inst.p) \
        - (i + 1.0) * inst.beta_k * inst.alpha_k


def terminal_gap_floor(inst: NemirovskiiInstance) -> float:
    """lam R^s / (16 (k+1)^(s(1+nu))) with s(1+nu) = (s(p+1)-p)/p."""
    expo = (inst.s * (inst.p + 1.0) - inst.p) / inst.p
    return inst.lam * inst.R**inst.s / (16.0 * (inst.k + 1.0) ** expo)


def s_floor(inst: NemirovskiiInstance, k_prime: int) -> float:
    """Value floor over points supported on the first k' coordinates."""
    return -(k_prime + 1.0) * inst.beta_k * inst.alpha_k


def opt_ceiling(inst: NemirovskiiInstance, k_prime: int) -> float:
    """Upper bound on the constrained optimum via the equal-coordinate witness."""
    if k_prime < 1:
        raise ValueError("k_prime must be >= 1")
    return -inst.beta_k * inst.R / k_prime ** (1.0 / inst.p)


def ball_gap_floor(inst: BallHardInstance, i: int) -> float:
    """R/(i+1)^(1/p) - alpha (i+1), the ball-oracle chain gap floor."""
    return inst.R / (i + 1.0) ** (1.0 / inst.p) - inst.alpha * (i + 1.0)


def ball_critical_iterations(inst: BallHardInstance) -> float:
    """Iteration scale (R/r)^(p/(p+1)) past which the floor degrades."""
    return (inst.R / inst.r) ** (inst.p / (inst.p + 1.0))


def constrained_prox_oracle(inst: NemirovskiiInstance, c, tol: float = None):
    """argmin_{||x||_p <= R} g_k(x) + lam ||x - c||_p^s (exact structured solve)."""
    f = as_objective(inst)
    tol = tol if tol is not None else 1e-9 * inst.beta_k * inst.R
    x, _ = oracles.solve_max_affine_composite(
        f, c, "spower", (inst.lam, inst.p, inst.s), tol, ball_radius=inst.R)
    return x


def constrained_ball_oracle(inst: BallHardInstance, c, tol: float = None):
    """argmin g_k over {||x - c||_p <= r} intersect {||x||_p <= R}."""
    f = as_objective(inst)
    tol = tol if tol is not None else 1e-12
    x, _ = oracles.solve_max_affine_composite(
        f, c, "ball", (inst.r, inst.p), tol, ball_radius=inst.R)
    return x


@dataclass
class ZeroChainRecord:
    step: int
    query_support: list
    response_support: list
    new_indices: list


@dataclass
class ZeroChainReport:
    records: list
    support_tol: float
    verdict: bool

    def supports(self):
        return [r.response_support for r in self.records]


def _support(x, tol) -> list:
    return [int(j) for j in np.nonzero(np.abs(x) > tol)[0]]


def verify_zero_chain(inst, oracle=None, T: int = None, support_tol: float = None):
    """Run x^(0) = 0, x^(i+1) = oracle(x^(i)) and check that each response
    touches exactly the next coordinate in order.

    Returns (report, iterates)."""
    if oracle is None:
        if isinstance(inst, NemirovskiiInstance):
            oracle = lambda c: constrained_prox_oracle(inst, c)
        else:
            oracle = lambda c: constrained_ball_oracle(inst, c)
    T = T if T is not None else inst.k
    support_tol = support_tol if support_tol is not None else 1e-7 * inst.R
    x = np.zeros(inst.d)
    records = []
    iterates = []
    verdict = True
    for step in range(1, T + 1):
        q_sup = _support(x, support_tol)
        x = oracle(x)
        iterates.append(x.copy())
        r_sup = _support(x, support_tol)
        new = sorted(set(r_sup) - set(q_sup))
        records.append(ZeroChainRecord(step, q_sup, r_sup, new))
        if new != [step - 1] or sorted(r_sup) != list(range(step)):
            verdict = False
    return ZeroChainReport(records, support_tol, verdict), iterates


def reference_constrained_opt(inst, tol: float = 1e-14):
    """High-accuracy optimum of the instance over its R-ball, by equalizing
    the active coordinates and a scalar root for the norm constraint.

    Returns (x_star, value)."""
    from scipy.optimize import brentq

    beta = _slope(inst)
    alpha = inst.alpha_k if isinstance(inst, NemirovskiiInstance) else inst.alpha
    R, p, k = inst.R, inst.p, inst.k
    idx = np.arange(1, k + 1)

    best = None
    for m in range(1, k + 1):
        # active coordinates 1..m equalized at x_i = tau + i alpha <= 0
        def norm_gap(tau):
            vals = -(tau + idx[:m] * alpha)
            vals = np.maximum(vals, 0.0)
            return float(np.sum(vals**p)) - R**p

        hi = -m * alpha  # x_m = 0 at this tau
        lo = hi - 2.0 * R
        for _ in range(200):
            if norm_gap(lo) > 0:
                break
            lo -= 2.0 * R
        if norm_gap(hi) > 0:
            continue
        tau = brentq(norm_gap, lo, hi, rtol=8.9e-16, maxiter=300)
        # consistency: the first inactive coordinate (value 0) must not win
        if m < k and 0.0 - (m + 1) * alpha > tau + 1e-15:
            continue
        x = np.zeros(inst.d)
        x[:m] = tau + idx[:m] * alpha
        val = beta * tau
        if best is None or val < best[1]:
            best = (x, val)
    if best is None:
        raise RuntimeError("no consistent active set found")
    return best


def make_unconstrained(inst) -> Objective:
    """max(g_k(x), ||x||_p - R): the unconstrained composite whose
    subgradient prefers the max-affine part in ties."""

    class _NormPart(Objective):
        smoothness = "smooth"

        def __init__(self, d, p, R):
            super().__init__(d)
            self.p, self.R = p, R

        def value(self, x):
            return pnorm(x, self.p) - self.R

        def gradient(self, x):
            v = as_vector(x)
            n = pnorm(v, self.p)
            if n == 0.0:
                return np.zeros_like(v)
            from .geometry import signed_pow
            return signed_pow(v, self.p - 1.0) / n ** (self.p - 1.0)

    return MaxOfObjectives([as_objective(inst), _NormPart(inst.d, inst.p, inst.R)])
