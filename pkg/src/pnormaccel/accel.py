"""Outer acceleration loops over the l_p^s proximal, ball, and Taylor oracles.

Four drivers share one skeleton: a scalar coefficient recurrence
``factor * lam_t * a^p = (A + a)^(p-1)``, an extrapolated query point
``y = (A x + a z)/(A + a)``, an oracle step from y, and a mirror step
``z = argmin <w, z> + bregman(z, y0)`` on the accumulated weighted gradients.

Scale convention: the p-power proximal step inside the line-searched loop is
``argmin f + lam_t ||. - y||_p^p`` (weight ``p * lam_t`` in solve_prox_ppower's
parameterization), so accepted iterates satisfy

    grad f(x_next) = -p * lam_t * |x_next - y|^(p-2) (x_next - y)

exactly, with lam_t = lam * ||x_next - y||_p^(s-p) enforced by the line
search.  The equivalent s-power oracle has coefficient ``p * lam / s``.

Geometry is pluggable: ``pmap`` maps iterates into the space whose l_p norm
drives all distances (identity by default, a matrix map for regression), and
``mirror`` solves the mirror step in that geometry.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .geometry import PNormParams, as_vector, bregman, dual_norm, mirror_argmin, pnorm
from .objectives import Objective
from . import oracles

__all__ = [
    "IterationRecord",
    "AccelState",
    "SolverTolerances",
    "LineSearchError",
    "solve_coefficient",
    "mirror_step",
    "line_search_lambda",
    "run_prox_solver",
    "run_ball_solver",
    "run_lsf_solver",
    "run_high_order",
    "potential",
]


@dataclass
class IterationRecord:
    t: int
    a: float
    A: float
    lambda_t: float
    step_norm: float  # ||x_{t+1} - y_t||_p in the driving geometry
    objective: float
    oracle_calls: int
    inner_iterations: int
    wall_time: float
    # trajectory snapshots for certification / replay
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    z: list = field(default_factory=list)
    grad_used: list = field(default_factory=list)
    # line-search-free extras
    lam_bar: float = math.nan
    beta: float = math.nan
    A_prime: float = math.nan
    x_oracle: list = field(default_factory=list)
    case: int = 0
    # ball extras
    at_boundary: bool = False
    # high-order extras
    smoothness_doubled: bool = False
    certified_gap: float = math.nan

    def finite_check(self):
        for name in ("a", "A", "lambda_t", "step_norm", "objective"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite trace field {name}")


@dataclass
class AccelState:
    t: int
    A: float
    x: np.ndarray
    z: np.ndarray
    w: np.ndarray  # accumulated sum of a_i (beta_i) grad f(x_i)
    y0: np.ndarray
    trace: list


@dataclass
class SolverTolerances:
    line_search_rel: float = 1e-3
    prox_tol: float = 1e-11
    zero_grad_tol: float = 1e-13
    max_expansions: int = 90
    max_bisections: int = 200


class LineSearchError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def solve_coefficient(A: float, lambda_t: float, p: float, factor: float) -> float:
    """Unique a > 0 with factor * lambda_t * a^p = (A + a)^(p-1)."""
    if lambda_t <= 0 or A < 0 or factor <= 0:
        raise ValueError("need lambda_t > 0, A >= 0, factor > 0")
    if A == 0.0:
        return 1.0 / (factor * lambda_t)
    c = math.log(factor * lambda_t)

    def h(loga):
        a = math.exp(loga)
        return c + p * loga - (p - 1.0) * math.log(A + a)

    lo, hi = math.log(A) - 60.0, math.log(A) + 60.0
    for _ in range(400):
        if h(lo) < 0:
            break
        lo -= 30.0
    for _ in range(400):
        if h(hi) > 0:
            break
        hi += 30.0
    loga = brentq(h, lo, hi, rtol=8.9e-16, maxiter=300)
    return math.exp(loga)


def mirror_step(w, y0, p: float) -> np.ndarray:
    """argmin_z <w, z> + bregman(z, y0, p), closed form."""
    return mirror_argmin(w, y0, p)


def potential(state, x_star, f_star: float, p: float, f: Objective = None,
              fx: float = None) -> float:
    """A_t (f(x_t) - f_star) + bregman(x_star, z_t, p)."""
    val = fx if fx is not None else f.value(state.x)
    return state.A * (val - f_star) + bregman(as_vector(x_star), state.z, p)


def _identity(x):
    return x


def _default_prox(f, y, lam_t, p, tol, x0):
    # weight p * lam_t so the accepted KKT gradient is -p lam_t |v|^(p-2) v
    return oracles.solve_prox_ppower(f, y, p * lam_t, p, tol, x0=x0)


def line_search_lambda(f: Objective, A: float, x, z, params: PNormParams,
                       tol_ls: float = 1e-3, factor: float = 5.0,
                       prox=None, pmap=None, lam_effective: float = None,
                       exponent_gap: float = None, lam_init: float = None,
                       tols: SolverTolerances = None, oracle_callback=None):
    """Find lam_t with lam_t = lam * ||x_next - y(lam_t)||_p^(s-p) consistent.

    ``prox(f, y, lam_t, x0)`` produces the trial step (ignore lam_t for a
    fixed oracle); ``pmap`` maps into the driving geometry.  Bracketing uses
    geometric expansion (x4) on the sign of log(realized/trial) followed by
    bisection; only continuity of the realized map is assumed.

    Returns (a, y, x_next, lam_t, prox_result, n_calls).
    """
    tols = tols or SolverTolerances()
    pmap = pmap or _identity
    p, s = params.p, params.s
    lam = lam_effective if lam_effective is not None else params.lam
    gap = exponent_gap if exponent_gap is not None else s - p
    if prox is None:
        def prox(ff, y, lt, x0):
            return _default_prox(ff, y, lt, p, tols.prox_tol, x0)

    x, z = as_vector(x), as_vector(z)
    n_calls = 0
    warm = {"x0": None}

    def evaluate(lam_t):
        nonlocal n_calls
        a = solve_coefficient(A, lam_t, p, factor)
        y = (A * x + a * z) / (A + a)
        res = prox(f, y, lam_t, warm["x0"])
        n_calls += 1
        warm["x0"] = res.x
        if oracle_callback is not None:
            oracle_callback(res.x)
        r = pnorm(pmap(res.x) - pmap(y), p)
        realized = lam * r**gap
        return a, y, res, r, realized

    if gap == 0.0:
        a, y, res, r, _ = evaluate(lam)
        return a, y, res.x, lam, res, n_calls

    lam_t = lam_init if (lam_init is not None and lam_init > 0) else lam
    a, y, res, r, realized = evaluate(lam_t)
    if realized <= 0.0:
        # oracle returned the query point: gradient is (numerically) zero
        return a, y, res.x, lam_t, res, n_calls

    def logratio(val_realized, val_trial):
        return math.log(val_realized) - math.log(val_trial)

    lr = logratio(realized, lam_t)
    tol_log = math.log1p(tol_ls)
    if abs(lr) <= tol_log:
        return a, y, res.x, lam_t, res, n_calls

    # expand a bracket [lam_lo, lam_hi] with sign(logratio) flipping
    grow = 4.0 if lr > 0 else 0.25
    lam_a, lr_a = lam_t, lr
    bracket = None
    for _ in range(tols.max_expansions):
        lam_b = lam_a * grow
        a, y, res, r, realized = evaluate(lam_b)
        if realized <= 0.0:
            return a, y, res.x, lam_b, res, n_calls
        lr_b = logratio(realized, lam_b)
        if abs(lr_b) <= tol_log:
            return a, y, res.x, lam_b, res, n_calls
        if lr_a * lr_b < 0:
            bracket = (lam_a, lam_b) if lam_a < lam_b else (lam_b, lam_a)
            break
        lam_a, lr_a = lam_b, lr_b
    if bracket is None:
        raise LineSearchError(
            "no consistency bracket found",
            {"A": A, "last_lambda": lam_a, "last_logratio": lr_a, "calls": n_calls},
        )

    lo, hi = bracket
    best = None
    for _ in range(tols.max_bisections):
        mid = math.sqrt(lo * hi)
        a, y, res, r, realized = evaluate(mid)
        if realized <= 0.0:
            return a, y, res.x, mid, res, n_calls
        lr_m = logratio(realized, mid)
        best = (a, y, res, mid)
        if abs(lr_m) <= tol_log:
            return a, y, res.x, mid, res, n_calls
        if lr_m > 0:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-15:
            break
    a, y, res, mid = best
    return a, y, res.x, mid, res, n_calls


def _init_state(f, x_init):
    x0 = as_vector(x_init).copy()
    return AccelState(t=0, A=0.0, x=x0.copy(), z=x0.copy(),
                      w=np.zeros_like(x0), y0=x0.copy(), trace=[])


def run_prox_solver(f: Objective, x_init, params: PNormParams, T: int,
                    tols: SolverTolerances = None, prox=None, mirror=None,
                    pmap=None, lam_effective: float = None,
                    grad_for_mirror=None, oracle_callback=None,
                    stop_check=None):
    """Line-searched accelerated proximal loop (finite s).

    Returns (x_T, trace).  Each iteration runs the lam_t consistency search,
    accepts the prox step, and performs the mirror update with the accepted
    gradient.  ``stop_check(state)`` may end the run early (used by the
    2-approximation certificate in regression).
    """
    tols = tols or SolverTolerances()
    pmap = pmap or _identity
    mirror = mirror or (lambda w, y0: mirror_step(w, y0, params.p))
    if grad_for_mirror is None:
        def grad_for_mirror(ff, x_new, y, lam_t):
            if ff.smoothness == "piecewise-linear-max":
                v = as_vector(x_new) - as_vector(y)
                from .geometry import signed_pow
                return -params.p * lam_t * signed_pow(v, params.p - 1.0)
            return ff.gradient(x_new)

    st = _init_state(f, x_init)
    lam_warm = None
    for t in range(T):
        if dual_norm(f.gradient(st.x), params.p) <= tols.zero_grad_tol:
            break
        t0 = time.perf_counter()
        a, y, x_next, lam_t, res, n_calls = line_search_lambda(
            f, st.A, st.x, st.z, params, tols.line_search_rel,
            prox=prox, pmap=pmap, lam_effective=lam_effective,
            lam_init=lam_warm, tols=tols, oracle_callback=oracle_callback)
        lam_warm = lam_t
        A_next = st.A + a
        g = grad_for_mirror(f, x_next, y, lam_t)
        st.w = st.w + a * g
        z_next = mirror(st.w, st.y0)
        r = pnorm(pmap(x_next) - pmap(y), params.p)
        rec = IterationRecord(
            t=t, a=a, A=A_next, lambda_t=lam_t, step_norm=r,
            objective=f.value(x_next), oracle_calls=n_calls,
            inner_iterations=res.inner_iterations,
            wall_time=time.perf_counter() - t0,
            x=list(map(float, x_next)), y=list(map(float, y)),
            z=list(map(float, z_next)), grad_used=list(map(float, g)))
        rec.finite_check()
        st.trace.append(rec)
        st.x, st.z, st.A, st.t = as_vector(x_next), z_next, A_next, t + 1
        if stop_check is not None and stop_check(st):
            break
    return st.x, st.trace


def run_ball_solver(f: Objective, x_init, r: float, p: float, T: int,
                    tols: SolverTolerances = None, gap_target: float = None,
                    f_star: float = None, oracle_callback=None, ball=None):
    """Accelerated loop over the (r, p)-ball oracle.

    The implicit system lam_t = ||grad f(x_{t+1})||_q / r^(p-1) is solved by
    the same bracketed consistency search, over lam_t.  An interior oracle
    answer means the global minimizer was found; the loop then stops."""
    if r <= 0:
        raise ValueError("r must be positive")
    tols = tols or SolverTolerances()
    ball = ball or (lambda ff, c: oracles.solve_ball(ff, c, r, p, tols.prox_tol))
    st = _init_state(f, x_init)
    lam_warm = None
    done = False
    for t in range(T):
        if done or dual_norm(f.gradient(st.x), p) <= tols.zero_grad_tol:
            break
        t0 = time.perf_counter()
        n_calls = 0

        def evaluate(lam_t):
            nonlocal n_calls
            a = solve_coefficient(st.A, lam_t, p, 5.0)
            y = (st.A * st.x + a * st.z) / (st.A + a)
            res = ball(f, y)
            n_calls += 1
            if oracle_callback is not None:
                oracle_callback(res.x)
            realized = dual_norm(f.gradient(res.x), p) / r ** (p - 1.0)
            return a, y, res, realized

        lam_t = lam_warm if lam_warm else max(
            dual_norm(f.gradient(st.x), p) / r ** (p - 1.0), 1e-12)
        a, y, res, realized = evaluate(lam_t)
        tol_log = math.log1p(tols.line_search_rel)
        if not res.at_boundary or realized <= tols.zero_grad_tol:
            done = True
        else:
            lr = math.log(realized) - math.log(lam_t)
            if abs(lr) > tol_log:
                grow = 4.0 if lr > 0 else 0.25
                lam_a, lr_a, bracket = lam_t, lr, None
                for _ in range(tols.max_expansions):
                    lam_b = lam_a * grow
                    a, y, res, realized = evaluate(lam_b)
                    if not res.at_boundary:
                        done = True
                        lam_t = lam_b
                        break
                    lr_b = math.log(realized) - math.log(lam_b)
                    if abs(lr_b) <= tol_log:
                        lam_t = lam_b
                        break
                    if lr_a * lr_b < 0:
                        bracket = (min(lam_a, lam_b), max(lam_a, lam_b))
                        break
                    lam_a, lr_a = lam_b, lr_b
                if bracket is not None:
                    lo, hi = bracket
                    for _ in range(tols.max_bisections):
                        mid = math.sqrt(lo * hi)
                        a, y, res, realized = evaluate(mid)
                        if not res.at_boundary:
                            done = True
                            lam_t = mid
                            break
                        lr_m = math.log(realized) - math.log(mid)
                        lam_t = mid
                        if abs(lr_m) <= tol_log:
                            break
                        if lr_m > 0:
                            lo = mid
                        else:
                            hi = mid
                elif bracket is None and not done and abs(
                        math.log(realized) - math.log(lam_t)) > tol_log:
                    raise LineSearchError("ball consistency bracket not found",
                                          {"A": st.A, "lam": lam_t})
        x_next = res.x
        lam_warm = lam_t
        a_fin = solve_coefficient(st.A, lam_t, p, 5.0)
        A_next = st.A + a_fin
        g = f.gradient(x_next)
        st.w = st.w + a_fin * g
        z_next = mirror_step(st.w, st.y0, p)
        rec = IterationRecord(
            t=t, a=a_fin, A=A_next, lambda_t=lam_t,
            step_norm=pnorm(x_next - y, p), objective=f.value(x_next),
            oracle_calls=n_calls, inner_iterations=res.inner_iterations,
            wall_time=time.perf_counter() - t0,
            x=list(map(float, x_next)), y=list(map(float, y)),
            z=list(map(float, z_next)), grad_used=list(map(float, g)),
            at_boundary=res.at_boundary)
        rec.finite_check()
        st.trace.append(rec)
        st.x, st.z, st.A, st.t = as_vector(x_next), z_next, A_next, t + 1
        if f_star is not None and gap_target is not None \
                and f.value(st.x) - f_star <= gap_target:
            break
    return st.x, st.trace


def lsf_lambda_bar(A_phase: float, psi_hat: float, lam: float, p: float, s: float) -> float:
    """Per-phase damping threshold for the line-search-free loop."""
    D = p * s - p + s
    return (A_phase ** (-(s - p) * (p + 1.0) / D)
            * psi_hat ** (p * (s - p) / D)
            * lam ** (p * p / D))


def run_lsf_solver(f: Objective, x_init, params: PNormParams, T: int,
                   psi_hat: float, tols: SolverTolerances = None,
                   A_min: float = None, lam_bar_override: float = None,
                   prox=None, pmap=None, schedule: str = "tracking"):
    """Line-search-free accelerated loop: one s-power oracle call per
    iteration, with damping beta = min(1, lam_bar / lam_realized).

    ``psi_hat`` estimates the initial divergence to the optimum; one probe
    oracle call calibrates the first lam_bar.  ``schedule`` picks how
    lam_bar evolves: ``"tracking"`` (default) reuses the previously realized
    lam, which keeps the per-iteration case certificates valid (they hold
    for any lam_bar fixed before the oracle call) while staying within a
    constant factor of the line-searched run; ``"phase"`` re-evaluates the
    A-power formula whenever A doubles, with ``A_min`` flooring the first
    phase.  Returns (x_final, trace)."""
    if psi_hat <= 0:
        raise ValueError("psi_hat must be positive")
    tols = tols or SolverTolerances()
    pmap = pmap or _identity
    p, s, lam = params.p, params.s, params.lam
    if prox is None:
        kappa = p * lam / s  # s-power coefficient inducing lam_t = lam * r^(s-p)

        def prox(ff, y):
            q = oracles.ProxQuery(center=y, params=PNormParams(p, s, kappa),
                                  tolerance=tols.prox_tol)
            return oracles.solve_prox(ff, q)

    st = _init_state(f, x_init)
    lam_probe = None
    if lam_bar_override is None:
        # calibrate the first lam_bar with one probe oracle call at x_init
        probe = prox(f, st.x)
        r0 = pnorm(pmap(probe.x) - pmap(st.x), p)
        lam_probe = lam * max(r0, 1e-300) ** (s - p)
    if A_min is None and lam_probe is not None:
        D = p * s - p + s
        expo = D / ((s - p) * (p + 1.0))
        A_min = (psi_hat ** (p * (s - p) / D) * lam ** (p * p / D) / lam_probe) ** expo
    phase_A = max(A_min if A_min is not None else 1e-300, 1e-300)
    lam_bar = lam_bar_override if lam_bar_override is not None else lam_probe
    lam_prev = None
    for t in range(T):
        if dual_norm(f.gradient(st.x), p) <= tols.zero_grad_tol:
            break
        t0 = time.perf_counter()
        if (lam_bar_override is None and schedule == "phase"
                and st.A >= 2.0 * phase_A):
            phase_A = st.A
            lam_bar = lsf_lambda_bar(phase_A, psi_hat, lam, p, s)
        a = solve_coefficient(st.A, lam_bar, p, (3.0 * p) ** p)
        A_prime = st.A + a
        y = (st.A * st.x + a * st.z) / A_prime
        res = prox(f, y)
        x_or = res.x
        r = pnorm(pmap(x_or) - pmap(y), p)
        lam_real = lam * r ** (s - p)
        if lam_real <= 0.0:
            # oracle fixed point: y is optimal
            st.x = x_or
            break
        beta = min(1.0, lam_bar / lam_real)
        if f.smoothness == "piecewise-linear-max":
            from .geometry import signed_pow
            g = -p * lam_real * signed_pow(as_vector(x_or) - as_vector(y), p - 1.0)
        else:
            g = f.gradient(x_or)
        st.w = st.w + a * beta * g
        z_next = mirror_step(st.w, st.y0, p) if pmap is _identity else None
        if z_next is None:
            raise NotImplementedError("custom geometry requires a mirror hook")
        A_next = st.A + beta * a
        x_next = ((1.0 - beta) * st.A * st.x + beta * A_prime * x_or) / A_next
        rec = IterationRecord(
            t=t, a=a, A=A_next, lambda_t=lam_real, step_norm=r,
            objective=f.value(x_next), oracle_calls=1,
            inner_iterations=res.inner_iterations,
            wall_time=time.perf_counter() - t0,
            x=list(map(float, x_next)), y=list(map(float, y)),
            z=list(map(float, z_next)), grad_used=list(map(float, g)),
            lam_bar=lam_bar, beta=beta, A_prime=A_prime,
            x_oracle=list(map(float, x_or)),
            case=1 if beta >= 1.0 - 1e-12 else 2)
        rec.finite_check()
        st.trace.append(rec)
        st.x, st.z, st.A, st.t = as_vector(x_next), z_next, A_next, t + 1
        if lam_bar_override is None and schedule == "tracking":
            # geometric extrapolation of the realized-lam trend; undershoot
            # is safe (beta < 1 damping with a certified decrement)
            ratio = min(lam_real / lam_prev, 1.0) if lam_prev else 1.0
            lam_bar = lam_real * max(ratio, 1e-3)
            lam_prev = lam_real
    return st.x, st.trace


def run_high_order(f: Objective, x_init, p: float, s: int, L: float, T: int,
                   tols: SolverTolerances = None, max_doublings: int = 20):
    """Accelerated loop over the (p, s)-Taylor oracle.

    Identical shape to the line-searched proximal loop with
    lam_t = (2 L / (s-1)!) ||x_{t+1} - y_t||_p^(s-p); a failed Taylor
    remainder certificate doubles L and redoes the iteration."""
    tols = tols or SolverTolerances()
    s = int(s)
    st = _init_state(f, x_init)
    lam_warm = None
    doubles = 0
    t = 0
    while t < T:
        if dual_norm(f.gradient(st.x), p) <= tols.zero_grad_tol:
            break
        t0 = time.perf_counter()
        factorial = math.exp(math.lgamma(s))
        lam_like = 2.0 * L / factorial
        params = PNormParams(p, float(s), lam_like)

        def taylor_prox(ff, y, lam_t, x0):
            return oracles.solve_taylor(ff, y, p, s, L, tols.prox_tol)

        a, y, x_next, lam_t, res, n_calls = line_search_lambda(
            f, st.A, st.x, st.z, params, tols.line_search_rel,
            prox=taylor_prox, lam_effective=lam_like, lam_init=lam_warm,
            tols=tols)
        r = pnorm(x_next - y, p)
        remainder = dual_norm(f.gradient(x_next) - f.taylor_gradient(x_next, y, s - 1), p)
        bound = (L / factorial) * r ** (s - 1.0)
        if remainder > bound * (1.0 + 1e-6) + 1e-14:
            if doubles >= max_doublings:
                raise LineSearchError("smoothness certificate keeps failing",
                                      {"L": L, "remainder": remainder, "bound": bound})
            L *= 2.0
            doubles += 1
            lam_warm = None
            continue
        lam_warm = lam_t
        A_next = st.A + a
        g = f.gradient(x_next)
        st.w = st.w + a * g
        z_next = mirror_step(st.w, st.y0, p)
        rec = IterationRecord(
            t=t, a=a, A=A_next, lambda_t=lam_t, step_norm=r,
            objective=f.value(x_next), oracle_calls=n_calls,
            inner_iterations=res.inner_iterations,
            wall_time=time.perf_counter() - t0,
            x=list(map(float, x_next)), y=list(map(float, y)),
            z=list(map(float, z_next)), grad_used=list(map(float, g)),
            smoothness_doubled=doubles > 0)
        rec.finite_check()
        st.trace.append(rec)
        st.x, st.z, st.A, st.t = as_vector(x_next), z_next, A_next, t + 1
        t += 1
    return st.x, st.trace
