"""Accelerated convex optimization in l_p geometry: proximal, ball, and
Taylor oracles with certified iterations; l_s regression by iterative
refinement; matching oracle-complexity hard instances."""

from .geometry import (
    PNormParams,
    bregman,
    bregman_bounds,
    dual_norm,
    grad_pnorm_pow,
    mirror_argmin,
    pnorm,
    pnorm_pow,
)

__version__ = "0.1.0"

__all__ = [
    "PNormParams",
    "pnorm",
    "pnorm_pow",
    "dual_norm",
    "grad_pnorm_pow",
    "bregman",
    "bregman_bounds",
    "mirror_argmin",
    "__version__",
]
