"""Gamma and MacDonald functions, plus the shared adaptive quadrature helpers.

K_s is evaluated from its integral representation

    K_s(x) = 1/2 (x/2)^s  int_0^inf exp(-t - x^2/(4t)) t^(-1-s) dt

after the change of variables t = (x/2) e^u, which turns it into
int_0^inf exp(-x cosh u) cosh(s u) du.  The split point t = x/2 becomes u = 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

from scipy import integrate

from .errors import DomainError, NumericError


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if int(self.max_subdivisions) < 1:
            raise DomainError("max_subdivisions must be >= 1")


DEFAULT_QUAD = QuadratureConfig()


def integrate_interval(f: Callable[[float], float], a: float, b: float,
                       cfg: QuadratureConfig = DEFAULT_QUAD,
                       points: Sequence[float] | None = None) -> float:
    """Adaptive integral of ``f`` over the finite interval [a, b]."""
    if b == a:
        return 0.0
    pts = None
    if points is not None:
        pts = [p for p in points if a < p < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                             limit=cfg.max_subdivisions, points=pts,
                             full_output=1)
    value, err = out[0], out[1]
    if len(out) > 3 and not math.isfinite(value):
        raise NumericError("quadrature returned a non-finite value",
                           {"a": a, "b": b, "message": out[3]})
    if len(out) > 3:
        # ier != 0; accept only when the error estimate is still tiny
        tol = max(cfg.abs_tol, cfg.rel_tol * abs(value)) * 1e3
        if not (err <= tol):
            raise NumericError("adaptive quadrature did not converge",
                               {"a": a, "b": b, "value": value,
                                "error_estimate": err, "message": out[3]})
    return value


def integrate_half_line(f: Callable[[float], float],
                        cfg: QuadratureConfig = DEFAULT_QUAD,
                        scale: float = 1.0,
                        points: Sequence[float] = ()) -> float:
    """Integral of ``f`` over (0, inf).

    The finite part is split at geometric multiples of ``scale`` (the
    integrand's natural decay length) and at any extra ``points``; the
    remaining tail is mapped onto a finite interval by y = tan(u).
    """
    if not scale > 0:
        raise DomainError("scale must be positive")
    edges = sorted({0.0, *(scale * 4.0 ** k for k in range(4)),
                    *(float(p) for p in points if p > 0)})
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += integrate_interval(f, lo, hi, cfg)
    last = edges[-1]
    u0 = math.atan(last)

    def tail(u):
        c = math.cos(u)
        if c <= 0.0:
            return 0.0
        y = math.tan(u)
        return f(y) / (c * c)

    # tail integrand relative to the bulk rarely needs the full rel_tol budget
    tail_cfg = QuadratureConfig(cfg.rel_tol, max(cfg.abs_tol, 1e-300),
                                cfg.max_subdivisions)
    total += integrate_interval(tail, u0, math.pi / 2, tail_cfg)
    return total


def gamma(x: float) -> float:
    """Gamma function for x > 0."""
    x = float(x)
    if not math.isfinite(x) or x <= 0:
        raise DomainError(f"gamma requires a finite positive argument, got {x!r}")
    return math.gamma(x)


def _log_cosh(v: float) -> float:
    v = abs(v)
    return v + math.log1p(math.exp(-2.0 * v)) - math.log(2.0)


def _u_cutoff(x: float, s: float) -> float:
    # smallest u (on a unit lattice) with x (cosh u - 1) - |s| u > 745
    u = math.acosh(1.0 + 745.0 / x)
    while x * (math.cosh(u) - 1.0) - abs(s) * u <= 745.0:
        u += 1.0
    return u


def bessel_k_scaled(s: float, x: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Return exp(x) * K_s(x)."""
    s, x = float(s), float(x)
    if not (math.isfinite(x) and x > 0):
        raise DomainError(f"bessel_k requires x > 0, got {x!r}")
    if not abs(s) < 5:
        raise DomainError(f"bessel_k order must satisfy |s| < 5, got {s!r}")

    def integrand(u):
        return math.exp(_log_cosh(s * u) - x * (math.cosh(u) - 1.0))

    u_max = _u_cutoff(x, s)
    # the bulk of the mass sits in u < ~ 1/sqrt(x) for large x
    knee = min(u_max, 1.0 / math.sqrt(x) if x > 1 else 1.0)
    pts = [knee, min(u_max, 4 * knee)]
    value = integrate_interval(integrand, 0.0, u_max, cfg, points=pts)
    if not value > 0:
        raise NumericError("bessel_k quadrature produced a non-positive value",
                           {"s": s, "x": x, "value": value})
    return value


def bessel_k(s: float, x: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """MacDonald function K_s(x), x > 0, |s| < 5."""
    scaled = bessel_k_scaled(s, x, cfg)
    return scaled * math.exp(-float(x))


def mcd2_rhs(alpha: float, nu: float) -> float:
    """Closed Gamma-function value of int_0^inf y^(alpha-1) K_nu(y)^2 dy."""
    return (math.sqrt(math.pi) / (4.0 * gamma((1.0 + alpha) / 2.0))
            * gamma(alpha / 2.0) * gamma(alpha / 2.0 - nu) * gamma(alpha / 2.0 + nu))


def mcd2_pair(alpha: float, nu: float, cfg: QuadratureConfig = DEFAULT_QUAD):
    """Both sides of the y^(alpha-1) K_nu^2 moment identity.

    Returns ``(lhs, rhs)`` where ``lhs`` is computed by nested quadrature
    (every K_nu value is itself a quadrature) and ``rhs`` from Gamma values.
    Requires alpha > 2 nu > 0; the boundary alpha = 2 nu is rejected.
    """
    alpha, nu = float(alpha), float(nu)
    if not (nu > 0 and alpha > 2 * nu):
        raise DomainError(f"mcd2_pair requires alpha > 2*nu > 0, got alpha={alpha}, nu={nu}")

    def integrand(y):
        k = bessel_k_scaled(nu, y, cfg)
        return y ** (alpha - 1.0) * k * k * math.exp(-2.0 * y)

    outer = QuadratureConfig(min(1e-11, cfg.rel_tol), 1e-300, max(cfg.max_subdivisions, 400))
    lhs = integrate_half_line(integrand, outer, scale=1.0)
    rhs = mcd2_rhs(alpha, nu)
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        raise NumericError("mcd2_pair produced a non-finite side",
                           {"lhs": lhs, "rhs": rhs})
    return lhs, rhs


__all__ = [
    "QuadratureConfig", "DEFAULT_QUAD", "integrate_interval", "integrate_half_line",
    "gamma", "bessel_k", "bessel_k_scaled", "mcd2_rhs", "mcd2_pair",
]
