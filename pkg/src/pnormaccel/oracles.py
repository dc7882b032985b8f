"""Oracle solvers: l_p^s proximal steps, l_p ball-constrained minimization,
and regularized Taylor-model steps, each returning a certified KKT residual.

Solver dispatch follows the objective's smoothness tag:

* ``smooth``: damped Newton on the regularized objective, with the |.|^p
  pieces quadratically smoothed below a tiny threshold so curvature stays
  bounded;
* ``piecewise-linear-max``: a structured active-set solver (exact up to a
  scalar root-find) when the affine pieces are coordinate-aligned with a
  common slope, otherwise a direct epigraph solve (all pieces are known, so
  the converged cutting-plane model is available in closed form).

Ball constraints ``||x|| <= R`` around the origin are handled by a monotone
bisection on the constraint multiplier, reusing the unconstrained solver.
All tolerances are absolute dual-norm residuals scaled by
``max(1, ||grad f(center)||_q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize

from .geometry import PNormParams, as_vector, dual_norm, pnorm, pnorm_pow, signed_pow
from .objectives import MaxAffineObjective, Objective

__all__ = [
    "ProxQuery",
    "ProxResult",
    "BallResult",
    "OracleError",
    "solve_prox",
    "solve_prox_ppower",
    "solve_ball",
    "solve_taylor",
    "certify_kkt",
    "solve_max_affine_composite",
    "solve_max_affine_epigraph",
]

_SMOOTH_FRACTION = 1e-10  # quadratic smoothing threshold, relative to scale


@dataclass
class ProxQuery:
    """Query record for the s-power proximal oracle."""

    center: np.ndarray
    params: PNormParams
    ball_radius: Optional[float] = None
    tolerance: float = 1e-10

    def __post_init__(self):
        self.center = as_vector(self.center)
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.ball_radius is not None and self.ball_radius <= 0:
            raise ValueError("ball_radius must be positive")


@dataclass
class ProxResult:
    x: np.ndarray
    lambda_t: float  # induced p-power scale lam * ||x - c||_p^(s-p)
    kkt_residual: float
    inner_iterations: int
    converged: bool = True
    multiplier: float = 0.0  # ball-constraint multiplier (constrained mode)
    objective_value: float = math.nan


@dataclass
class BallResult:
    x: np.ndarray
    lam: float  # ||grad f(x)||_q / r^(p-1) at the boundary, 0 inside
    at_boundary: bool
    kkt_residual: float = 0.0
    inner_iterations: int = 0


class OracleError(RuntimeError):
    """Inner solver failed; carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------------------
# regularizer terms (value / gradient / Hessian, smoothed and exact variants)
# ---------------------------------------------------------------------------


def _phi_pieces(v, p, theta):
    """Smoothed |t|^p pieces: (values, first, second derivatives)."""
    a = np.abs(v)
    inner = a < theta
    val = a**p
    d1 = p * signed_pow(v, p - 1.0)
    d2 = p * (p - 1.0) * a ** (p - 2.0) if p > 2.0 else np.full_like(a, p * (p - 1.0))
    if theta > 0 and np.any(inner):
        c2 = 0.5 * p * theta ** (p - 2.0)
        val = np.where(inner, c2 * v * v + theta**p * (1.0 - p / 2.0), val)
        d1 = np.where(inner, 2.0 * c2 * v, d1)
        d2 = np.where(inner, 2.0 * c2, d2)
    return val, d1, d2


class _PPowerReg:
    """reg(x) = (w/p) ||x - c||_p^p (gradient w * |v|^(p-2) v)."""

    kind = "ppower"

    def __init__(self, c, w, p, theta=0.0):
        self.c = as_vector(c)
        self.w = float(w)
        self.p = float(p)
        self.theta = float(theta)

    def value(self, x):
        return (self.w / self.p) * pnorm_pow(as_vector(x) - self.c, self.p)

    def grad(self, x):
        return self.w * signed_pow(as_vector(x) - self.c, self.p - 1.0)

    def smoothed_vgh(self, x):
        v = as_vector(x) - self.c
        val, d1, d2 = _phi_pieces(v, self.p, self.theta)
        w = self.w / self.p
        return w * float(np.sum(val)), w * d1, np.diag(w * d2)


class _SPowerReg:
    """reg(x) = kappa ||x - c||_p^s (gradient kappa*s*rho^(s-p) |v|^(p-2) v)."""

    kind = "spower"

    def __init__(self, c, kappa, p, s, theta=0.0):
        self.c = as_vector(c)
        self.kappa = float(kappa)
        self.p = float(p)
        self.s = float(s)
        self.theta = float(theta)

    def value(self, x):
        v = as_vector(x) - self.c
        return self.kappa * pnorm(v, self.p) ** self.s

    def grad(self, x):
        v = as_vector(x) - self.c
        rho = pnorm(v, self.p)
        if rho == 0.0:
            return np.zeros_like(v)
        return self.kappa * self.s * rho ** (self.s - self.p) * signed_pow(v, self.p - 1.0)

    def smoothed_vgh(self, x):
        v = as_vector(x) - self.c
        p, s, k = self.p, self.s, self.kappa
        val, d1, d2 = _phi_pieces(v, p, self.theta)
        N = float(np.sum(val)) + self.theta**p * 1e-6 + 1e-300
        e = s / p
        f = k * N**e
        g = k * e * N ** (e - 1.0) * d1
        H = k * e * (e - 1.0) * N ** (e - 2.0) * np.outer(d1, d1) + np.diag(
            k * e * N ** (e - 1.0) * d2
        )
        return f, g, H


# ---------------------------------------------------------------------------
# damped Newton engine
# ---------------------------------------------------------------------------


def _damped_newton(vgh, x0, residual_fn, tol, max_iter=200, value_fn=None, diverge_norm=None):
    """Minimize a smooth strictly convex function given (value, grad, Hessian).

    Stops when ``residual_fn(x) <= tol``.  Levenberg damping escalates on
    factorization failure or non-descent; Armijo backtracking on the value.
    Returns (x, iterations, residual, converged).
    """
    x = as_vector(x0).copy()
    f, g, H = vgh(x)
    best_x, best_res = x.copy(), residual_fn(x)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        res = residual_fn(x)
        if res < best_res:
            best_res, best_x = res, x.copy()
        if res <= tol:
            return x, n_iter - 1, res, True
        if diverge_norm is not None and float(np.linalg.norm(x - x0)) > diverge_norm:
            return best_x, n_iter - 1, best_res, False
        scale = max(float(np.trace(H)) / max(len(x), 1), 1e-30)
        ridge = 0.0
        d = None
        for _ in range(60):
            try:
                d = np.linalg.solve(H + ridge * np.eye(len(x)), -g)
            except np.linalg.LinAlgError:
                d = None
            if d is not None and np.all(np.isfinite(d)) and float(np.dot(g, d)) < 0:
                break
            ridge = scale * 1e-12 if ridge == 0.0 else ridge * 100.0
            d = None
        if d is None:
            return best_x, n_iter, best_res, False
        gd = float(np.dot(g, d))
        t = 1.0
        accepted = False
        for _ in range(70):
            xn = x + t * d
            fn_, gn, Hn = vgh(xn)
            if np.isfinite(fn_) and fn_ <= f + 1e-4 * t * gd:
                x, f, g, H = xn, fn_, gn, Hn
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return best_x, n_iter, best_res, False
    res = residual_fn(x)
    if res < best_res:
        best_res, best_x = res, x.copy()
    return best_x, n_iter, best_res, best_res <= tol


def _scaled_tol(tol, f: Objective, c, p):
    return tol * max(1.0, dual_norm(f.gradient(c), p))


def _smooth_theta(c, extra_scale=1.0):
    return _SMOOTH_FRACTION * max(1.0, float(np.max(np.abs(c))), extra_scale)


def _solve_smooth_composite(f: Objective, reg, x0, p, tol_abs, max_iter=200, diverge_norm=None):
    """Newton on f + reg; residual measured with the exact reg gradient."""

    def vgh(x):
        rf, rg, rH = reg.smoothed_vgh(x)
        return f.value(x) + rf, f.gradient(x) + rg, f.hessian(x) + rH

    def residual(x):
        return dual_norm(f.gradient(x) + reg.grad(x), p)

    return _damped_newton(vgh, x0, residual, tol_abs, max_iter=max_iter, diverge_norm=diverge_norm)


# ---------------------------------------------------------------------------
# structured solver for coordinate-aligned max-affine pieces
# ---------------------------------------------------------------------------


def _coord_aligned(f: MaxAffineObjective):
    """Return (slope, coordinate indices) if every piece is slope * e_j."""
    rows = f.rows
    idx = np.zeros(rows.shape[0], dtype=int)
    slope = None
    for i, row in enumerate(rows):
        nz = np.nonzero(row)[0]
        if nz.size != 1:
            return None
        j = int(nz[0])
        b = row[j]
        if b <= 0:
            return None
        if slope is None:
            slope = b
        elif abs(b - slope) > 1e-12 * abs(slope):
            return None
        idx[i] = j
    if len(set(idx.tolist())) != len(idx):
        return None
    return slope, idx


def solve_max_affine_composite(f: MaxAffineObjective, c, reg_kind, reg_args, tol=1e-12,
                               ball_radius=None):
    """Minimize max-affine + regularizer centered at c by active-set equalization.

    ``reg_kind`` is ``"spower"`` with ``reg_args = (kappa, p, s)``,
    ``"ppower"`` with ``(w, p)`` (term (w/p)||x-c||_p^p), or ``"ball"`` with
    ``(r, p)`` for the r-ball-constrained minimization of the max term alone.
    Falls back to the epigraph solve for non-aligned pieces or when the outer
    ||x||_p <= ball_radius constraint binds.
    """
    c = as_vector(c)
    aligned = _coord_aligned(f)
    if aligned is None:
        return solve_max_affine_epigraph(f, c, reg_kind, reg_args, tol, ball_radius)
    beta, idx = aligned
    offs = f.offsets
    p = reg_args[1]

    keys = beta * c[idx] + offs  # piece values at x = c
    order = np.argsort(-keys, kind="stable")
    n_eval = 0

    def gaps(tau, m):
        sel = order[:m]
        return (beta * c[idx[sel]] + offs[sel] - tau) / beta, sel

    def stationarity(tau, m):
        g, _ = gaps(tau, m)
        g = np.maximum(g, 0.0)
        if reg_kind == "spower":
            kappa, _, s = reg_args
            rho_p = float(np.sum(g**p))
            rho = rho_p ** (1.0 / p)
            return kappa * s * rho ** (s - p) * float(np.sum(g ** (p - 1.0))) - beta
        if reg_kind == "ppower":
            w, _ = reg_args
            return w * float(np.sum(g ** (p - 1.0))) - beta
        # ball: root of ||gaps||_p = r
        r, _ = reg_args
        return float(np.sum(g**p)) - r**p

    x = None
    tau_star = None
    m_star = None
    for m in range(1, len(offs) + 1):
        hi = float(keys[order[m - 1]])
        n_eval += 1
        if stationarity(hi, m) > 0:
            # pull already exceeds the slope at the highest admissible tau;
            # the active set must grow
            continue
        # stationarity is decreasing in tau; find a lower bracket
        lo = hi - max(1.0, abs(hi))
        ok = False
        for _ in range(200):
            n_eval += 1
            if stationarity(lo, m) > 0:
                ok = True
                break
            lo = hi - 2.0 * (hi - lo)
        if not ok:
            continue
        tau = brentq(stationarity, lo, hi, args=(m,), xtol=1e-300, rtol=8.9e-16, maxiter=300)
        n_eval += 40
        next_key = float(keys[order[m]]) if m < len(offs) else -math.inf
        if tau >= next_key - 1e-13 * max(1.0, abs(tau)):
            tau_star, m_star = tau, m
            break
    if tau_star is None:
        return solve_max_affine_epigraph(f, c, reg_kind, reg_args, tol, ball_radius)

    g, sel = gaps(tau_star, m_star)
    x = c.copy()
    x[idx[sel]] = c[idx[sel]] - np.maximum(g, 0.0)

    if ball_radius is not None and pnorm(x, p) > ball_radius * (1.0 + 1e-9):
        return solve_max_affine_epigraph(f, c, reg_kind, reg_args, tol, ball_radius)
    return x, n_eval


def solve_max_affine_epigraph(f: MaxAffineObjective, c, reg_kind, reg_args, tol=1e-12,
                              ball_radius=None):
    """Generic epigraph solve: min_t,x  t + reg(x - c)  s.t. pieces(x) <= t.

    Since every affine piece is known explicitly, the fully-cut model equals
    the function and a single smooth NLP solve replaces cut generation.
    """
    c = as_vector(c)
    d = f.dim
    p = reg_args[1]

    if reg_kind == "spower":
        kappa, _, s = reg_args
        reg = _SPowerReg(c, kappa, p, s, theta=_smooth_theta(c))
    elif reg_kind == "ppower":
        w, _ = reg_args
        reg = _PPowerReg(c, w, p, theta=_smooth_theta(c))
    else:
        reg = None  # ball mode handled via constraint

    def obj(z):
        x, t = z[:d], z[d]
        val = t + (reg.value(x) if reg is not None else 0.0)
        grad = np.zeros(d + 1)
        grad[d] = 1.0
        if reg is not None:
            grad[:d] = reg.grad(x)
        return val, grad

    cons = [
        {
            "type": "ineq",
            "fun": lambda z: z[d] - (f.rows @ z[:d] + f.offsets),
            "jac": lambda z: np.hstack([-f.rows, np.ones((f.rows.shape[0], 1))]),
        }
    ]
    if reg_kind == "ball":
        r = reg_args[0]

        def ball_con(z):
            return r**p - pnorm_pow(z[:d] - c, p)

        def ball_jac(z):
            grad = np.zeros(d + 1)
            grad[:d] = -p * signed_pow(z[:d] - c, p - 1.0)
            return grad

        cons.append({"type": "ineq", "fun": ball_con, "jac": ball_jac})
    if ball_radius is not None:

        def outer_con(z):
            return ball_radius**p - pnorm_pow(z[:d], p)

        def outer_jac(z):
            grad = np.zeros(d + 1)
            grad[:d] = -p * signed_pow(z[:d], p - 1.0)
            return grad

        cons.append({"type": "ineq", "fun": outer_con, "jac": outer_jac})

    z0 = np.append(c, f.value(c) + 1e-3)
    res = minimize(obj, z0, jac=True, method="SLSQP", constraints=cons,
                   options={"maxiter": 800, "ftol": 1e-16})
    if not res.success and res.status != 8:  # 8: iteration limit with small steps
        raise OracleError(f"epigraph solve failed: {res.message}")
    return res.x[:d], int(res.nit)


def _max_affine_stationarity(f: MaxAffineObjective, x, reg_grad, p, tie_tol):
    """Dual-norm distance from -reg_grad to the active-piece subdifferential."""
    vals = f.pieces(x)
    act = np.nonzero(vals >= np.max(vals) - tie_tol)[0]
    aligned = _coord_aligned(f)
    if aligned is not None:
        beta, idx = aligned
        theta = np.zeros(len(f.offsets))
        pull = np.maximum(-reg_grad[idx[act]], 0.0) / beta
        tot = float(np.sum(pull))
        if tot > 0:
            theta[act] = pull / tot
        else:
            theta[act[0]] = 1.0
        resid_vec = f.rows.T @ theta + reg_grad
        return dual_norm(resid_vec, p)
    # generic: least-squares combination over the active pieces
    G = f.rows[act].T
    theta, _ = _simplex_lsq(G, -reg_grad)
    return dual_norm(G @ theta + reg_grad, p)


def _simplex_lsq(G, target, iters=200):
    """min_theta ||G theta - target||_2 over the probability simplex
    (projected gradient; small systems only)."""
    m = G.shape[1]
    theta = np.full(m, 1.0 / m)
    L = max(float(np.linalg.norm(G, 2)) ** 2, 1e-30)
    for _ in range(iters):
        grad = G.T @ (G @ theta - target)
        theta = _project_simplex(theta - grad / L)
    return theta, float(np.linalg.norm(G @ theta - target))


def _project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    cond = u - css / ind > 0
    rho = ind[cond][-1]
    tau = css[cond][-1] / rho
    return np.maximum(v - tau, 0.0)


# ---------------------------------------------------------------------------
# public oracles
# ---------------------------------------------------------------------------


def _ball_multiplier_search(inner_solve, p, radius, tol_feas=1e-11):
    """Monotone bisection on the multiplier of (mu/p)(||x||_p^p - R^p).

    ``inner_solve(mu)`` returns the minimizer of the Lagrangian at mu.
    Assumes the unconstrained solution violates ||x||_p <= radius.
    """
    n_eval = 0
    mu_lo, x_lo = 0.0, None
    mu_hi = 1.0
    for _ in range(200):
        x_hi = inner_solve(mu_hi)
        n_eval += 1
        if pnorm(x_hi, p) <= radius:
            break
        mu_lo, x_lo = mu_hi, x_hi
        mu_hi *= 4.0
    else:
        raise OracleError("ball multiplier bracket not found")
    for _ in range(200):
        mid = math.sqrt(max(mu_lo, mu_hi * 1e-14) * mu_hi) if mu_lo == 0 else math.sqrt(mu_lo * mu_hi)
        x_mid = inner_solve(mid)
        n_eval += 1
        nrm = pnorm(x_mid, p)
        if abs(nrm - radius) <= tol_feas * max(1.0, radius):
            return x_mid, mid, n_eval
        if nrm > radius:
            mu_lo, x_lo = mid, x_mid
        else:
            mu_hi, x_hi = mid, x_mid
        if mu_hi / max(mu_lo, 1e-300) < 1.0 + 1e-14:
            return x_mid, mid, n_eval
    return x_mid, mid, n_eval


def solve_prox(f: Objective, q: ProxQuery) -> ProxResult:
    """s-power proximal oracle: argmin_x f(x) + lam ||x - c||_p^s, optionally
    subject to ||x||_p <= q.ball_radius."""
    params = q.params
    if params.ball_mode:
        raise ValueError("solve_prox requires finite s; use solve_ball for s = inf")
    p, s, kappa = params.p, params.s, params.lam
    c = q.center
    tol_abs = _scaled_tol(q.tolerance, f, c, p)

    if f.smoothness == "piecewise-linear-max":
        if not isinstance(f, MaxAffineObjective):
            raise OracleError("only explicit max-affine objectives are supported")
        x, n_eval = solve_max_affine_composite(f, c, "spower", (kappa, p, s), q.tolerance,
                                               ball_radius=q.ball_radius)
        reg = _SPowerReg(c, kappa, p, s)
        resid = _max_affine_stationarity(f, x, reg.grad(x), p, 1e-12 * max(1.0, abs(f.value(x))))
        mult = 0.0
        lam_t = kappa * pnorm(x - c, p) ** (s - p)
        return ProxResult(x, lam_t, resid, n_eval, resid <= max(tol_abs, 1e-9),
                          mult, f.value(x))

    theta = _smooth_theta(c)
    reg = _SPowerReg(c, kappa, p, s, theta=theta)
    x, n_it, resid, ok = _solve_smooth_composite(f, reg, c, p, tol_abs)
    mult = 0.0
    n_total = n_it
    if q.ball_radius is not None and pnorm(x, p) > q.ball_radius * (1.0 + 1e-9):
        ball_reg_center = np.zeros_like(c)

        def inner(mu):
            both = _CombinedReg(reg, _PPowerReg(ball_reg_center, mu, p, theta=theta))
            xs, its, _, _ = _solve_smooth_composite(f, both, c, p, tol_abs)
            return xs

        x, mult, n_ms = _ball_multiplier_search(inner, p, q.ball_radius)
        n_total += n_ms
        resid = dual_norm(f.gradient(x) + reg.grad(x)
                          + mult * signed_pow(x, p - 1.0), p)
        ok = resid <= max(10 * tol_abs, 1e-8)
    if not ok and resid > 100 * max(tol_abs, 1e-12):
        raise OracleError(f"prox solve did not converge (residual {resid:.3e})",
                          best=ProxResult(x, kappa * pnorm(x - c, p) ** (s - p), resid,
                                          n_total, False, mult, f.value(x)))
    lam_t = kappa * pnorm(x - c, p) ** (s - p)
    return ProxResult(x, lam_t, resid, n_total, ok, mult, f.value(x))


class _CombinedReg:
    kind = "combined"

    def __init__(self, a, b):
        self.a, self.b = a, b

    def value(self, x):
        return self.a.value(x) + self.b.value(x)

    def grad(self, x):
        return self.a.grad(x) + self.b.grad(x)

    def smoothed_vgh(self, x):
        fa, ga, Ha = self.a.smoothed_vgh(x)
        fb, gb, Hb = self.b.smoothed_vgh(x)
        return fa + fb, ga + gb, Ha + Hb


def solve_prox_ppower(f: Objective, c, lambda_t: float, p: float, tol: float = 1e-10,
                      ball_radius: Optional[float] = None, x0=None) -> ProxResult:
    """p-power proximal step: argmin_y f(y) + (lambda_t/p) ||y - c||_p^p."""
    if lambda_t <= 0:
        raise ValueError("lambda_t must be positive")
    c = as_vector(c)
    tol_abs = _scaled_tol(tol, f, c, p)

    if f.smoothness == "piecewise-linear-max":
        x, n_eval = solve_max_affine_composite(f, c, "ppower", (lambda_t, p), tol,
                                               ball_radius=ball_radius)
        reg = _PPowerReg(c, lambda_t, p)
        resid = _max_affine_stationarity(f, x, reg.grad(x), p, 1e-12 * max(1.0, abs(f.value(x))))
        return ProxResult(x, lambda_t, resid, n_eval, True, 0.0, f.value(x))

    theta = _smooth_theta(c)
    reg = _PPowerReg(c, lambda_t, p, theta=theta)
    start = c if x0 is None else as_vector(x0)
    x, n_it, resid, ok = _solve_smooth_composite(f, reg, start, p, tol_abs)
    mult = 0.0
    if ball_radius is not None and pnorm(x, p) > ball_radius * (1.0 + 1e-9):

        def inner(mu):
            both = _CombinedReg(reg, _PPowerReg(np.zeros_like(c), mu, p, theta=theta))
            xs, _, _, _ = _solve_smooth_composite(f, both, c, p, tol_abs)
            return xs

        x, mult, n_ms = _ball_multiplier_search(inner, p, ball_radius)
        n_it += n_ms
        resid = dual_norm(f.gradient(x) + reg.grad(x) + mult * signed_pow(x, p - 1.0), p)
        ok = True
    if not ok and resid > 100 * max(tol_abs, 1e-12):
        raise OracleError(f"p-power prox did not converge (residual {resid:.3e})",
                          best=ProxResult(x, lambda_t, resid, n_it, False, mult, f.value(x)))
    return ProxResult(x, lambda_t, resid, n_it, ok, mult, f.value(x))


def solve_ball(f: Objective, c, r: float, p: float, tol: float = 1e-10) -> BallResult:
    """Ball-constrained oracle: argmin_x f(x) s.t. ||x - c||_p <= r.

    Interior global minimizers are returned with ``at_boundary=False``;
    otherwise the boundary point with its Lagrange multiplier."""
    if r <= 0:
        raise ValueError("r must be positive")
    c = as_vector(c)
    tol_abs = _scaled_tol(tol, f, c, p)

    if f.smoothness == "piecewise-linear-max":
        x, n_eval = solve_max_affine_composite(f, c, "ball", (r, p), tol)
        gnorm = dual_norm(f.gradient(x), p)
        lam = gnorm / r ** (p - 1.0)
        reg_grad = lam * signed_pow(x - c, p - 1.0)
        resid = max(_max_affine_stationarity(f, x, reg_grad, p,
                                             1e-12 * max(1.0, abs(f.value(x)))),
                    abs(pnorm(x - c, p) - r))
        return BallResult(x, lam, True, resid, n_eval)

    # attempt the unconstrained minimum first; bail to boundary mode on
    # divergence past the ball
    def vgh(x):
        return f.value(x), f.gradient(x), f.hessian(x)

    def residual(x):
        return dual_norm(f.gradient(x), p)

    x_free, n_it, res_free, ok = _damped_newton(vgh, c, residual, tol_abs,
                                                max_iter=150, diverge_norm=50.0 * r)
    if ok and pnorm(x_free - c, p) <= r * (1.0 + 1e-9):
        return BallResult(x_free, 0.0, False, res_free, n_it)

    theta = _smooth_theta(c, extra_scale=r)

    def inner(mu):
        reg = _PPowerReg(c, mu, p, theta=theta)
        xs, _, _, _ = _solve_smooth_composite(f, reg, c, p, tol_abs)
        return xs

    n_eval = n_it

    def feas(mu):
        return pnorm(inner(mu) - c, p) - r

    mu_lo, mu_hi = 1e-8, 1.0
    for _ in range(200):
        if feas(mu_lo) > 0:
            break
        mu_lo *= 0.25
    for _ in range(200):
        if feas(mu_hi) < 0:
            break
        mu_hi *= 4.0
    mu = brentq(feas, mu_lo, mu_hi, rtol=1e-14, maxiter=200)
    x = inner(mu)
    n_eval += 60
    gnorm = dual_norm(f.gradient(x), p)
    lam = gnorm / r ** (p - 1.0)
    resid = max(dual_norm(f.gradient(x) + lam * signed_pow(x - c, p - 1.0), p),
                abs(pnorm(x - c, p) - r))
    if resid > 100 * max(tol_abs, 1e-12):
        raise OracleError(f"ball solve did not converge (residual {resid:.3e})",
                          best=BallResult(x, lam, True, resid, n_eval))
    return BallResult(x, lam, True, resid, n_eval)


def _log_factorial(n: int) -> float:
    return math.lgamma(n + 1.0)


def solve_taylor(f: Objective, c, p: float, s: int, L: float, tol: float = 1e-10) -> ProxResult:
    """Taylor-model oracle: argmin_x  T_{s-1}(x; c) + (2L/(p (s-1)!)) ||x - c||_p^s,
    with T_{s-1} the order-(s-1) Taylor expansion of f at c.

    Reports the induced scale lambda_t = (2L/(s-1)!) ||x - c||_p^(s-p)."""
    if not (isinstance(s, int) or float(s).is_integer()) or s < 2:
        raise ValueError("s must be an integer >= 2")
    s = int(s)
    try:
        f.taylor_gradient(as_vector(c), as_vector(c), s - 1)
    except NotImplementedError as exc:
        raise ValueError("objective does not provide Taylor derivative data") from exc
    c = as_vector(c)
    factorial = math.exp(_log_factorial(s - 1))  # (s-1)! in log space for large s
    kappa = 2.0 * L / (p * factorial)
    reg = _SPowerReg(c, kappa, p, float(s), theta=_smooth_theta(c))

    def vgh(x):
        _, rg, rH = reg.smoothed_vgh(x)
        g = f.taylor_gradient(x, c, s - 1) + rg
        H = f.taylor_hessian(x, c, s - 1) + rH
        return math.nan, g, H

    def residual(x):
        return dual_norm(f.taylor_gradient(x, c, s - 1) + reg.grad(x), p)

    tol_abs = tol * max(1.0, dual_norm(f.taylor_gradient(c, c, s - 1), p))
    x, n_it, resid, ok = _damped_newton_taylor(vgh, c, residual, tol_abs)
    if not ok and resid > 100 * max(tol_abs, 1e-12):
        raise OracleError(f"Taylor-model solve did not converge (residual {resid:.3e})",
                          best=ProxResult(x, 0.0, resid, n_it, False))
    lam_t = (2.0 * L / factorial) * pnorm(x - c, p) ** (s - p)
    return ProxResult(x, lam_t, resid, n_it, ok, 0.0, f.value(x))


def _damped_newton_taylor(vgh, x0, residual_fn, tol, max_iter=200):
    """Newton variant for Taylor models, whose surrogate value may be
    nonconvex far out: trust the residual, use damped steps only."""
    x = as_vector(x0).copy()
    best_x, best_res = x.copy(), residual_fn(x)
    for n_iter in range(1, max_iter + 1):
        res = residual_fn(x)
        if res < best_res:
            best_res, best_x = res, x.copy()
        if res <= tol:
            return x, n_iter - 1, res, True
        _, g, H = vgh(x)
        scale = max(float(np.trace(H)) / max(len(x), 1), 1e-30)
        ridge, d = 0.0, None
        for _ in range(60):
            try:
                d = np.linalg.solve(H + ridge * np.eye(len(x)), -g)
            except np.linalg.LinAlgError:
                d = None
            if d is not None and np.all(np.isfinite(d)):
                break
            ridge = scale * 1e-12 if ridge == 0.0 else ridge * 100.0
        if d is None:
            return best_x, n_iter, best_res, False
        t, accepted = 1.0, False
        for _ in range(70):
            xn = x + t * d
            if residual_fn(xn) < res:
                x, accepted = xn, True
                break
            t *= 0.5
        if not accepted:
            return best_x, n_iter, best_res, False
    return best_x, max_iter, best_res, best_res <= tol


def certify_kkt(f: Objective, result, query) -> float:
    """Recompute the stationarity defect of a solve_* result in the dual norm.

    Deterministic; uses exact (unsmoothed) gradients."""
    if isinstance(query, ProxQuery):
        p, s, kappa = query.params.p, query.params.s, query.params.lam
        c = query.center
        x = result.x
        reg = _SPowerReg(c, kappa, p, s)
        u = reg.grad(x)
        if getattr(result, "multiplier", 0.0):
            u = u + result.multiplier * signed_pow(x, p - 1.0)
        if f.smoothness == "piecewise-linear-max":
            resid = _max_affine_stationarity(f, x, u, p, 1e-12 * max(1.0, abs(f.value(x))))
        else:
            resid = dual_norm(f.gradient(x) + u, p)
        if query.ball_radius is not None and getattr(result, "multiplier", 0.0):
            resid = max(resid, abs(result.multiplier) * abs(pnorm(x, p) - query.ball_radius))
        return resid
    if isinstance(result, BallResult):
        c, r, p = query["center"], query["r"], query["p"]
        x = result.x
        if not result.at_boundary:
            return dual_norm(f.gradient(x), p)
        lam = dual_norm(f.gradient(x), p) / r ** (p - 1.0)
        u = lam * signed_pow(x - as_vector(c), p - 1.0)
        if f.smoothness == "piecewise-linear-max":
            stat = _max_affine_stationarity(f, x, u, p, 1e-12 * max(1.0, abs(f.value(x))))
        else:
            stat = dual_norm(f.gradient(x) + u, p)
        return max(stat, abs(pnorm(x - as_vector(c), p) - r))
    # p-power query: dict with center/lambda_t/p
    c, lam_t, p = query["center"], query["lambda_t"], query["p"]
    x = result.x
    u = lam_t * signed_pow(x - as_vector(c), p - 1.0)
    if f.smoothness == "piecewise-linear-max":
        return _max_affine_stationarity(f, x, u, p, 1e-12 * max(1.0, abs(f.value(x))))
    return dual_norm(f.gradient(x) + u, p)
