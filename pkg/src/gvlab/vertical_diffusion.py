"""One-dimensional vertical diffusions on (0, inf) killed at 0.

A diffusion is described by its generator B = a(y)^2 d^2/dy^2 + b(y) d/dy.
Three families are provided:

* :class:`BMDrift` -- a = sigma, b = -2 m (Brownian motion with negative drift),
* :class:`Bessel`  -- a = 1, b = gamma / y with gamma = 1 - 2 s, s in (0, 1),
* :class:`Tabulated` -- a, b linearly interpolated from a table and extended
  by constants outside it.

Everything is normalised at the base point 1: s'(1) = h(1) = 1.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

from .errors import DomainError, NumericError, PreconditionError, ValidationError
from .special_fn import (DEFAULT_QUAD, QuadratureConfig, bessel_k_scaled, gamma,
                         integrate_half_line, integrate_interval)

#: growth exponent above which G(inf, z) is treated as super-polynomial
MAX_GROWTH_EXPONENT = 8.0


def _positive(name, v):
    v = float(v)
    if not (math.isfinite(v) and v > 0):
        raise DomainError(f"{name} must be a finite positive number, got {v!r}")
    return v


@dataclass(frozen=True)
class AdmissibilityReport:
    integral_at_infinity_diverges: bool
    integral_at_zero_converges: bool
    admissible: bool
    diagnostics: str = ""


class DiffusionSpec:
    """Common interface; subclasses supply a, b and (optionally) closed forms."""

    kind = "abstract"

    # -- coefficients -------------------------------------------------------
    def a(self, y):
        raise NotImplementedError

    def b(self, y):
        raise NotImplementedError

    def log_h(self, y: float) -> float:
        """int_1^y b/a^2."""
        raise NotImplementedError

    def decay_length(self, lam: float) -> float:
        """Length scale on which K(., lam) decays; used to place quadrature breakpoints."""
        return 1.0 / math.sqrt(lam) if lam > 0 else 1.0

    # -- closed forms default to the generic numerical routes -----------------
    def green(self, y, z):
        return green_by_quadrature(self, y, z)

    def green_inf(self, z):
        return green_by_quadrature(self, math.inf, z)

    def kernel(self, y, lam):
        raise NotImplementedError

    def kernel_dy(self, y, lam):
        raise NotImplementedError

    def admissibility(self) -> AdmissibilityReport:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class BMDrift(DiffusionSpec):
    """a = sigma, b = -2 m."""

    sigma: float = 1.0
    m: float = 0.0
    kind = "BMDrift"

    def __post_init__(self):
        _positive("sigma", self.sigma)
        if not (math.isfinite(self.m) and self.m >= 0):
            raise DomainError(f"drift parameter m must be >= 0, got {self.m!r}")

    def params(self):
        return {"sigma": self.sigma, "m": self.m}

    @property
    def theta(self) -> float:
        return self.m / self.sigma

    def a(self, y):
        return self.sigma + 0.0 * np.asarray(y, dtype=float)

    def b(self, y):
        return -2.0 * self.m + 0.0 * np.asarray(y, dtype=float)

    def log_h(self, y):
        return -2.0 * self.m / self.sigma ** 2 * (np.asarray(y, dtype=float) - 1.0)

    def rate(self, lam):
        """Exponential decay rate r with K(y, lam) = exp(-r y)."""
        th = self.theta
        lam = np.asarray(lam, dtype=float)
        # sqrt(lam + th^2) - th, written to avoid cancellation for small lam
        return lam / (np.sqrt(lam + th * th) + th) / self.sigma if th > 0 else np.sqrt(lam) / self.sigma

    def decay_length(self, lam):
        r = float(self.rate(lam))
        return 1.0 / r if r > 0 else 1.0

    def green(self, y, z):
        y, z = np.asarray(y, float), np.asarray(z, float)
        mn = np.minimum(y, z)
        s2 = self.sigma ** 2
        if self.m == 0:
            return mn / s2
        c = 2.0 * self.m / s2
        return np.exp(-c * z) * np.expm1(c * mn) / (2.0 * self.m)

    def green_inf(self, z):
        z = np.asarray(z, float)
        s2 = self.sigma ** 2
        if self.m == 0:
            return z / s2
        return -np.expm1(-2.0 * self.m / s2 * z) / (2.0 * self.m)

    def kernel(self, y, lam):
        return np.exp(-self.rate(lam) * np.asarray(y, float))

    def kernel_dy(self, y, lam):
        r = self.rate(lam)
        return -r * np.exp(-r * np.asarray(y, float))

    def admissibility(self):
        return AdmissibilityReport(True, True, True,
                                   f"closed form: s'(z) = exp({2 * self.m / self.sigma ** 2:g} (z - 1)), m >= 0")


@dataclass(frozen=True)
class Bessel(DiffusionSpec):
    """a = 1, b = gamma / y with gamma = 1 - 2 s."""

    s: float = 0.5
    quad: QuadratureConfig = field(default=DEFAULT_QUAD, compare=False, repr=False)
    kind = "Bessel"

    def __post_init__(self):
        if not (0.0 < self.s < 1.0):
            raise DomainError(f"Bessel index s must lie in (0, 1), got {self.s!r}")

    def params(self):
        return {"s": self.s}

    @property
    def gamma_(self) -> float:
        return 1.0 - 2.0 * self.s

    def a(self, y):
        return 1.0 + 0.0 * np.asarray(y, dtype=float)

    def b(self, y):
        return self.gamma_ / np.asarray(y, dtype=float)

    def log_h(self, y):
        return self.gamma_ * np.log(np.asarray(y, dtype=float))

    def green(self, y, z):
        y, z = np.asarray(y, float), np.asarray(z, float)
        g = self.gamma_
        return z ** g * np.minimum(y, z) ** (1.0 - g) / (1.0 - g)

    def green_inf(self, z):
        return np.asarray(z, float) / (2.0 * self.s)

    @property
    def _norm(self) -> float:
        return 2.0 ** (1.0 - self.s) / gamma(self.s)

    def _scalar_kernel(self, y, lam):
        if y == 0 or lam == 0:
            return 1.0
        x = y * math.sqrt(lam)
        if x > 745.0:
            return 0.0
        return self._norm * x ** self.s * bessel_k_scaled(self.s, x, self.quad) * math.exp(-x)

    def _scalar_kernel_dy(self, y, lam):
        if lam == 0:
            return 0.0
        sl = math.sqrt(lam)
        x = y * sl
        if x > 745.0:
            return 0.0
        # d/dx [x^s K_s(x)] = -x^s K_{s-1}(x) = -x^s K_{1-s}(x)
        return -self._norm * sl * x ** self.s * bessel_k_scaled(1.0 - self.s, x, self.quad) * math.exp(-x)

    def kernel(self, y, lam):
        return _vectorise(self._scalar_kernel, y, lam)

    def kernel_dy(self, y, lam):
        return _vectorise(self._scalar_kernel_dy, y, lam)

    def admissibility(self):
        return AdmissibilityReport(True, True, True,
                                   f"closed form: s'(z) = z^{-self.gamma_:g}; both conditions hold for gamma in (-1, 1)")


def _vectorise(fn, y, lam):
    y_arr = np.asarray(y, dtype=float)
    lam = float(lam)
    if y_arr.ndim == 0:
        return float(fn(float(y_arr), lam))
    return np.array([fn(float(v), lam) for v in y_arr.ravel()]).reshape(y_arr.shape)


class Tabulated(DiffusionSpec):
    """Coefficients a, b sampled on an increasing positive grid.

    Values are linearly interpolated between nodes and continued as
    constants outside [y_grid[0], y_grid[-1]].  ``y_max`` truncates the
    domain of the boundary-value problem that defines K(., lam).
    """

    kind = "Tabulated"
    BVP_INTERVALS = 4000
    GRADING = 4.0
    POWER = 3.0

    def __init__(self, y_grid: Sequence[float], a_vals: Sequence[float],
                 b_vals: Sequence[float], y_max: float):
        y = np.array(y_grid, dtype=float)
        a = np.array(a_vals, dtype=float)
        b = np.array(b_vals, dtype=float)
        if y.ndim != 1 or y.size < 8:
            raise DomainError("tabulated grids need at least 8 nodes")
        if a.shape != y.shape or b.shape != y.shape:
            raise DomainError("a_vals and b_vals must match y_grid in length")
        if not np.all(np.diff(y) > 0) or y[0] <= 0:
            raise DomainError("y_grid must be strictly increasing and positive")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise DomainError("a must be finite and strictly positive")
        if not np.all(np.isfinite(b)):
            raise DomainError("b must be finite")
        self.y_max = _positive("y_max", y_max)
        for arr in (y, a, b):
            arr.setflags(write=False)
        self.y_grid, self.a_vals, self.b_vals = y, a, b
        self._lock = threading.Lock()
        self._bvp_cache: dict[float, CubicSpline] = {}
        self._growth_checked = False
        self._build_primitive()

    def params(self):
        return {"n": int(self.y_grid.size), "y_max": self.y_max}

    def __repr__(self):
        return f"Tabulated(n={self.y_grid.size}, y_max={self.y_max:g})"

    def a(self, y):
        return np.interp(y, self.y_grid, self.a_vals)

    def b(self, y):
        return np.interp(y, self.y_grid, self.b_vals)

    def _ratio(self, y):
        return self.b(y) / self.a(y) ** 2

    def _build_primitive(self):
        # cumulative int_0^y b/a^2 on refined cells, 5-point Gauss-Legendre per cell
        top = max(self.y_max, self.y_grid[-1]) * 1.0
        nodes = np.union1d(np.concatenate(([0.0, 1.0, top], self.y_grid[self.y_grid < top])), [])
        fine = [np.linspace(lo, hi, 9)[:-1] for lo, hi in zip(nodes[:-1], nodes[1:])]
        self._cells = np.concatenate(fine + [[nodes[-1]]])
        gx, gw = np.polynomial.legendre.leggauss(5)
        lo, hi = self._cells[:-1], self._cells[1:]
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        vals = self._ratio(mid[:, None] + half[:, None] * gx[None, :])
        inc = (vals * gw[None, :]).sum(axis=1) * half
        self._cum = np.concatenate(([0.0], np.cumsum(inc)))
        self._gauss = (gx, gw)
        self._top = nodes[-1]
        self._tail_slope = float(self._ratio(self._top))
        self._p1 = self._primitive_scalar(1.0)

    def _primitive_scalar(self, y):
        if y >= self._top:
            return self._cum[-1] + self._tail_slope * (y - self._top)
        i = int(np.searchsorted(self._cells, y, side="right") - 1)
        lo = self._cells[i]
        if y == lo:
            return self._cum[i]
        gx, gw = self._gauss
        mid, half = (lo + y) / 2, (y - lo) / 2
        return self._cum[i] + half * float(np.dot(gw, self._ratio(mid + half * gx)))

    def log_h(self, y):
        y_arr = np.asarray(y, dtype=float)
        if y_arr.ndim == 0:
            return self._primitive_scalar(float(y_arr)) - self._p1
        return np.array([self._primitive_scalar(v) - self._p1 for v in y_arr.ravel()]).reshape(y_arr.shape)

    def decay_length(self, lam):
        a_typ = float(np.max(self.a_vals))
        return min(self.y_max / 8.0, a_typ / math.sqrt(lam)) if lam > 0 else self.y_max / 8.0

    def green_inf(self, z):
        if not self._growth_checked:
            check_green_growth(self)
            self._growth_checked = True
        return green_by_quadrature(self, math.inf, z)

    # -- K(., lam) from the two-point boundary value problem -------------------
    def _solve_bvp(self, lam: float, n: int):
        c, q = self.GRADING, self.POWER
        xi = np.linspace(0.0, 1.0, n + 1)
        # y = y_max u^q with u exponential in xi; the power makes K(y) ~ 1 - C y^(2s)
        # type boundary layers smooth in xi, the exponential spreads nodes over the bulk
        ec = math.expm1(c)
        u = np.expm1(c * xi) / ec
        u1 = c * np.exp(c * xi) / ec
        u2 = c * u1
        y = self.y_max * u ** q
        y1 = self.y_max * q * u ** (q - 1) * u1
        y2 = self.y_max * q * ((q - 1) * u ** (q - 2) * u1 ** 2 + u ** (q - 1) * u2)
        hx = 1.0 / n
        a2 = self.a(y) ** 2
        bb = self.b(y)
        # a^2 (f'' - (y''/y') f') / y'^2 + b f' / y' = lam f, with f' meaning d/dxi
        with np.errstate(divide="ignore", invalid="ignore"):
            # y1 vanishes at xi = 0, a node that never enters an interior row
            c2 = a2 / y1 ** 2
            c1 = (bb / y1) - a2 * y2 / y1 ** 3
            lower = c2 / hx ** 2 - c1 / (2 * hx)
            diag = -2.0 * c2 / hx ** 2 - lam
            upper = c2 / hx ** 2 + c1 / (2 * hx)
        m = n - 1
        ab = np.zeros((3, m))
        ab[0, 1:] = upper[1:m]
        ab[1, :] = diag[1:n]
        ab[2, :-1] = lower[2:n]
        rhs = np.zeros(m)
        rhs[0] = -lower[1] * 1.0  # f(0) = 1
        f_int = linalg.solve_banded((1, 1), ab, rhs)
        f = np.concatenate(([1.0], f_int, [0.0]))
        return y, f

    def _profile(self, lam: float) -> CubicSpline:
        lam = float(lam)
        with self._lock:
            hit = self._bvp_cache.get(lam)
        if hit is not None:
            return hit
        n = self.BVP_INTERVALS
        y, coarse = self._solve_bvp(lam, n)
        _, fine = self._solve_bvp(lam, 2 * n)
        extrap = (4.0 * fine[::2] - coarse) / 3.0
        if not np.all(np.isfinite(extrap)):
            raise NumericError("BVP solve for K(., lam) produced non-finite values", {"lam": lam})
        gap = float(np.max(np.abs(fine[::2] - coarse)))
        if gap > 1e-2:
            raise NumericError("BVP for K(., lam) is under-resolved",
                               {"lam": lam, "richardson_gap": gap})
        spline = CubicSpline(y, np.clip(extrap, 0.0, 1.0))
        with self._lock:
            self._bvp_cache.setdefault(lam, spline)
        return spline

    def _scalar_kernel(self, y, lam):
        if y <= 0 or lam == 0:
            return 1.0
        if y >= self.y_max:
            return 0.0
        return float(self._profile(lam)(y))

    def kernel(self, y, lam):
        if lam < 0:
            raise DomainError("lambda must be >= 0")
        if lam == 0:
            return 1.0 + 0.0 * np.asarray(y, float)
        return _vectorise(self._scalar_kernel, y, lam)

    def kernel_dy(self, y, lam, step: float = 1e-3):
        if lam == 0:
            return 0.0 * np.asarray(y, float)

        def d(yv, lv):
            # Richardson on central differences with steps h and h/2
            h = min(step, yv / 2.0)
            d1 = (self._scalar_kernel(yv + h, lv) - self._scalar_kernel(yv - h, lv)) / (2 * h)
            h2 = h / 2
            d2 = (self._scalar_kernel(yv + h2, lv) - self._scalar_kernel(yv - h2, lv)) / (2 * h2)
            return (4.0 * d2 - d1) / 3.0
        return _vectorise(d, y, lam)

    def admissibility(self):
        return check_tabulated(self)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def _check_y(name, y):
    y = float(y)
    if not (y > 0):
        raise DomainError(f"{name} must be > 0, got {y!r}")
    return y


def scale_derivative(spec: DiffusionSpec, z: float) -> float:
    """s'(z) = exp(-int_1^z b/a^2)."""
    z = _check_y("z", z)
    return math.exp(-float(spec.log_h(z)))


def speed_density(spec: DiffusionSpec, z: float) -> float:
    """m(z) = 1 / (s'(z) a(z)^2)."""
    z = _check_y("z", z)
    return 1.0 / (scale_derivative(spec, z) * float(spec.a(z)) ** 2)


def h_function(spec: DiffusionSpec, y: float) -> float:
    """h(y) = exp(int_1^y b/a^2) = 1 / s'(y)."""
    y = _check_y("y", y)
    return math.exp(float(spec.log_h(y)))


def check_conditions(spec: DiffusionSpec) -> AdmissibilityReport:
    """Test the two integral conditions on the scale derivative."""
    return spec.admissibility()


def check_tabulated(spec: Tabulated, doublings: int = 10) -> AdmissibilityReport:
    cfg = QuadratureConfig(1e-8, 1e-300, 400)
    notes = []

    def sprime(z):
        lh = spec.log_h(z)
        return math.exp(-lh) if -lh < 700 else math.inf

    try:
        at_zero = integrate_interval(sprime, 0.0, 1.0, cfg, points=list(spec.y_grid[spec.y_grid < 1]))
        zero_ok = math.isfinite(at_zero)
    except NumericError as exc:
        at_zero, zero_ok = math.nan, False
        notes.append(f"int_0^1 s' failed: {exc}")
    notes.append(f"int_0^1 s' = {at_zero:.6g}")

    # int_1^R s' over doubling R up to 2^doublings * y_max (heuristic)
    edges = [1.0]
    r = max(spec.y_max, 2.0)
    edges.append(r)
    for _ in range(doublings):
        r *= 2.0
        edges.append(r)
    incs = []
    diverges = False
    for lo, hi in zip(edges[:-1], edges[1:]):
        if -float(spec.log_h(hi)) > 700 or -float(spec.log_h(lo)) > 700:
            diverges = True
            notes.append(f"s' overflows on [{lo:g}, {hi:g}]")
            break
        incs.append(integrate_interval(sprime, lo, hi, cfg,
                                       points=list(spec.y_grid[(spec.y_grid > lo) & (spec.y_grid < hi)])))
    if not diverges and len(incs) >= 2:
        # increments that stop shrinking mean the partial integrals grow without bound
        diverges = incs[-1] >= 0.97 * incs[-2] and incs[-1] > 0
        notes.append("increments over doublings: " + ", ".join(f"{v:.3g}" for v in incs[-3:]))
    notes.append("divergence at infinity decided heuristically by doubling R")
    return AdmissibilityReport(diverges, zero_ok, bool(diverges and zero_ok), "; ".join(notes))


def _require_admissible(spec):
    rep = spec.admissibility()
    if not rep.admissible:
        raise PreconditionError(f"diffusion {spec!r} is not admissible: {rep.diagnostics}")


def green_by_quadrature(spec: DiffusionSpec, y: float, z: float,
                        cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """G(y, z) = h(z)/a(z)^2 int_0^(y ^ z) dw / h(w), evaluated by quadrature."""
    z = _check_y("z", z)
    upper = min(float(y), z)
    pts = None
    if isinstance(spec, Tabulated):
        pts = list(spec.y_grid[spec.y_grid < upper])

    def inv_h(w):
        return math.exp(-float(spec.log_h(w)))

    inner = integrate_interval(inv_h, 0.0, upper, cfg, points=pts)
    if not math.isfinite(inner):
        raise NumericError("int_0^z dw / h(w) diverged", {"z": z})
    return math.exp(float(spec.log_h(z))) / float(spec.a(z)) ** 2 * inner


def green(spec: DiffusionSpec, y: float, z: float) -> float:
    """Green function of B on (0, inf) with Dirichlet condition at 0."""
    _check_y("y", y)
    _check_y("z", z)
    _require_admissible(spec)
    return float(spec.green(y, z))


def green_inf(spec: DiffusionSpec, z: float) -> float:
    """G(inf, z) = lim_{y -> inf} G(y, z) = s(z) m(z)."""
    _check_y("z", z)
    _require_admissible(spec)
    return float(spec.green_inf(z))


def check_green_growth(spec: DiffusionSpec, z_lo: float = 1.0, z_hi: float = 1e6,
                       points: int = 25) -> float:
    """Largest local log-log slope of G(inf, .) on a log grid; raises above the cap."""
    zs = np.geomspace(z_lo, z_hi, points)
    vals = np.array([green_by_quadrature(spec, math.inf, z) for z in zs])
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise ValidationError("G(inf, z) is not finite and positive on the growth grid")
    slopes = np.diff(np.log(vals)) / np.diff(np.log(zs))
    worst = float(np.max(slopes))
    if worst > MAX_GROWTH_EXPONENT:
        raise ValidationError(f"G(inf, z) grows faster than z^{MAX_GROWTH_EXPONENT:g} "
                              f"(local exponent {worst:.3g})")
    return worst


def kernel_K(spec: DiffusionSpec, y, lam: float):
    """K(y, lam) = E^y[exp(-lam tau)]."""
    lam = float(lam)
    if lam < 0 or not math.isfinite(lam):
        raise DomainError(f"lambda must be finite and >= 0, got {lam!r}")
    if np.any(np.asarray(y) < 0):
        raise DomainError("y must be >= 0")
    if isinstance(spec, Tabulated) and lam == 0:
        raise DomainError("tabulated kernels require lambda > 0")
    return spec.kernel(y, lam)


def dK_dy(spec: DiffusionSpec, y, lam: float):
    """Derivative of K(y, lam) in y."""
    lam = float(lam)
    if lam < 0 or not math.isfinite(lam):
        raise DomainError(f"lambda must be finite and >= 0, got {lam!r}")
    if np.any(np.asarray(y) <= 0):
        raise DomainError("y must be > 0")
    return spec.kernel_dy(y, lam)


def kernel_d2y(spec: DiffusionSpec, y, lam: float):
    """Second y-derivative of K from the ODE B K = lam K."""
    y = np.asarray(y, dtype=float)
    k = spec.kernel(y, lam)
    dk = spec.kernel_dy(y, lam)
    return (lam * k - spec.b(y) * dk) / spec.a(y) ** 2


@dataclass(frozen=True)
class SampledFunction:
    """A nonnegative function known through samples, linear in between, 0 past the last node."""

    grid: tuple
    values: tuple

    def __post_init__(self):
        g = np.asarray(self.grid, float)
        v = np.asarray(self.values, float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise DomainError("grid and values must be 1-d of equal length >= 2")
        if np.any(np.diff(g) <= 0) or g[0] < 0:
            raise DomainError("grid must be increasing and >= 0")
        object.__setattr__(self, "grid", tuple(g.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], grid) -> "SampledFunction":
        g = np.asarray(grid, float)
        return cls(tuple(g), tuple(np.asarray(fn(g), float)))

    @property
    def support_end(self) -> float:
        return self.grid[-1]

    def arrays(self):
        return np.asarray(self.grid), np.asarray(self.values)

    def __call__(self, z):
        g, v = self.arrays()
        return np.interp(z, g, v, left=v[0], right=0.0)


OCC_PANEL = 0.25
OCC_ORDER = 12


def _piecewise_occupation(spec: DiffusionSpec, g: SampledFunction, y: float, extra) -> float:
    # G(y, .) g is smooth between sample nodes and y, so composite Gauss-Legendre
    # on those panels is far more reliable than adaptive quadrature across many kinks
    grid, _ = g.arrays()
    end = g.support_end
    cuts = np.unique(np.concatenate([grid, [0.0, y, end], np.asarray(extra, float)]))
    cuts = cuts[(cuts >= 0.0) & (cuts <= end)]
    edges = [cuts[0]]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        k = max(1, int(math.ceil((hi - lo) / OCC_PANEL)))
        edges.extend(np.linspace(lo, hi, k + 1)[1:])
    edges = np.asarray(edges)
    gx, gw = np.polynomial.legendre.leggauss(OCC_ORDER)
    lo, hi = edges[:-1, None], edges[1:, None]
    z = (0.5 * (hi - lo) * gx + 0.5 * (hi + lo)).ravel()
    w = (0.5 * (hi - lo) * gw).ravel()
    if isinstance(spec, (BMDrift, Bessel)):
        gz = np.asarray(spec.green(y, z), float)
    else:
        gz = np.array([float(spec.green(y, zi)) for zi in z])
    return math.fsum(w * gz * g(z))


def occupation_expectation(spec: DiffusionSpec, g, y: float,
                           cfg: QuadratureConfig = DEFAULT_QUAD,
                           breakpoints: Sequence[float] = ()) -> float:
    """int_0^inf G(y, z) g(z) dz, the mean occupation integral E^y[int_0^tau g(eta_s) ds]."""
    y = _check_y("y", y)
    _require_admissible(spec)
    pts = list(breakpoints)
    upper = math.inf
    if isinstance(g, SampledFunction):
        grid = np.asarray(g.grid)
        upper = g.support_end
        # keep the breakpoint list short: QUADPACK copes well with mild kinks
        pts += list(grid[:: max(1, grid.size // 40)]) + [upper]
    if isinstance(spec, Tabulated):
        pts += list(spec.y_grid)
    pts.append(y)

    def gval(z):
        return float(g(z))

    def weight(z):
        return math.exp(float(spec.log_h(z))) * abs(gval(z)) / float(spec.a(z)) ** 2

    scale = max(y, 1.0)
    try:
        if isinstance(g, SampledFunction):
            # bounded with compact support: only the behaviour of h / a^2 at 0 matters
            gmax = float(np.max(np.abs(g.arrays()[1])))
            check = gmax * integrate_interval(
                lambda z: math.exp(float(spec.log_h(z))) / float(spec.a(z)) ** 2,
                0.0, min(upper, 1.0), QuadratureConfig(1e-8, 1e-300, 400))
        elif math.isfinite(upper):
            check = integrate_interval(weight, 0.0, upper, QuadratureConfig(1e-8, 1e-300, 400), points=pts)
        else:
            check = integrate_half_line(weight, QuadratureConfig(1e-8, 1e-300, 400), scale=scale, points=pts)
    except NumericError as exc:
        raise DomainError(f"int h |g| / a^2 does not converge: {exc}") from exc
    if not math.isfinite(check) or check > 1e12:
        raise DomainError("int h |g| / a^2 diverges; occupation expectation is infinite")

    def integrand(z):
        gz = gval(z)
        return float(spec.green(y, z)) * gz if gz != 0 else 0.0

    if isinstance(g, SampledFunction):
        return _piecewise_occupation(spec, g, y, pts)
    if math.isfinite(upper):
        return integrate_interval(integrand, 0.0, upper, cfg, points=sorted(set(pts)))
    return integrate_half_line(integrand, cfg, scale=scale, points=pts)


def load_tabulated(path) -> Tabulated:
    """Read ``tabulated <n> <y_max>`` followed by n lines ``y a b``."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    return parse_tabulated(lines)


def parse_tabulated(lines) -> Tabulated:
    if not lines:
        raise DomainError("empty tabulated diffusion file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "tabulated":
        raise DomainError(f"bad header {lines[0]!r}; expected 'tabulated <n> <y_max>'")
    n, y_max = int(head[1]), float(head[2])
    rows = [ln.split() for ln in lines[1:]]
    if len(rows) != n or any(len(r) != 3 for r in rows):
        raise DomainError(f"expected {n} rows of 'y a b'")
    arr = np.array(rows, dtype=float)
    return Tabulated(arr[:, 0], arr[:, 1], arr[:, 2], y_max)


def dump_tabulated(spec: Tabulated) -> str:
    out = [f"tabulated {spec.y_grid.size} {float(spec.y_max)!r}"]
    for y, a, b in zip(spec.y_grid.tolist(), spec.a_vals.tolist(), spec.b_vals.tolist()):
        out.append(f"{y!r} {a!r} {b!r}")
    return "\n".join(out) + "\n"


def tabulate(a_fn, b_fn, y_grid, y_max) -> Tabulated:
    y = np.asarray(y_grid, float)
    return Tabulated(y, np.broadcast_to(a_fn(y), y.shape), np.broadcast_to(b_fn(y), y.shape), y_max)
