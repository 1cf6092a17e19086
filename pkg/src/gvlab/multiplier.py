"""Scalar multiplier symbols and the constants that bound them.

The quadrature routes (``phi_extension``, ``phi_alt``, ``t_symbol``,
``s_symbol``) integrate against the Green function at infinity by default.
Passing a finite ``y0`` swaps in G(y0, .), which is what a simulation
started at height y0 actually estimates.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, NumericError
from .special_fn import DEFAULT_QUAD, QuadratureConfig, gamma, integrate_half_line
from .vertical_diffusion import (BMDrift, Bessel, DiffusionSpec, Tabulated,
                                 _require_admissible)

AT_INFINITY = math.inf


# ---------------------------------------------------------------------------
# quadrature symbols
# ---------------------------------------------------------------------------

def _lam(lam):
    lam = float(lam)
    if not (math.isfinite(lam) and lam > 0):
        raise DomainError(f"lambda must be finite and > 0, got {lam!r}")
    return lam


def _green_weight(spec: DiffusionSpec, y0: Optional[float]):
    if y0 is None or math.isinf(y0):
        return lambda y: float(spec.green_inf(y))
    if not y0 > 0:
        raise DomainError("y0 must be > 0")
    return lambda y: float(spec.green(y0, y))


def _integrate(spec, lam, integrand, y0, cfg, kernel_power=2):
    pts = []
    if y0 is not None and math.isfinite(y0):
        pts.append(float(y0))
    if isinstance(spec, Tabulated):
        pts.append(spec.y_max)
        upper_cut = spec.y_max
    else:
        upper_cut = None
    scale = spec.decay_length(lam) / kernel_power
    # the Green weight varies on unit scale even when the kernel decays slowly
    edge = 0.25
    while edge < scale:
        pts.append(edge)
        edge *= 4.0

    def f(y):
        if upper_cut is not None and y >= upper_cut:
            return 0.0
        return integrand(y)

    try:
        return integrate_half_line(f, cfg, scale=scale, points=pts)
    except NumericError as exc:
        exc.diagnostics.setdefault("lambda", lam)
        exc.diagnostics.setdefault("spec", repr(spec))
        raise


def phi_extension(spec: DiffusionSpec, lam: float, y0: Optional[float] = None,
                  cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """int G(inf, y) (dK/dy)^2 a^2 dy."""
    lam = _lam(lam)
    _require_admissible(spec)
    g = _green_weight(spec, y0)

    def integrand(y):
        dk = float(spec.kernel_dy(y, lam))
        return g(y) * dk * dk * float(spec.a(y)) ** 2

    return _integrate(spec, lam, integrand, y0, cfg)


def phi_alt(spec: DiffusionSpec, lam: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """1/2 - lam int G(inf, y) K^2 dy."""
    lam = _lam(lam)
    return 0.5 - lam * s_symbol(spec, lam, cfg=cfg)


def t_symbol(spec: DiffusionSpec, lam: float, y0: Optional[float] = None,
             cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """int a G(inf, y) (dK/dy) K dy (raw value, no operator signs)."""
    lam = _lam(lam)
    _require_admissible(spec)
    g = _green_weight(spec, y0)

    def integrand(y):
        return float(spec.a(y)) * g(y) * float(spec.kernel_dy(y, lam)) * float(spec.kernel(y, lam))

    return _integrate(spec, lam, integrand, y0, cfg)


def s_symbol(spec: DiffusionSpec, lam: float, y0: Optional[float] = None,
             cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """int G(inf, y) K^2 dy."""
    lam = _lam(lam)
    _require_admissible(spec)
    g = _green_weight(spec, y0)

    def integrand(y):
        k = float(spec.kernel(y, lam))
        return g(y) * k * k

    return _integrate(spec, lam, integrand, y0, cfg)


# closed forms ---------------------------------------------------------------

def bessel_t_constant(s: float) -> float:
    """pi^2 Gamma(4s) / (2^(8s) s^2 Gamma(s)^4); equals 1/4 at s = 1/2."""
    return math.pi ** 2 * gamma(4 * s) / (2.0 ** (8 * s) * s * s * gamma(s) ** 4)


def phi_closed(spec: DiffusionSpec, lam: float) -> float:
    lam = float(lam)
    if isinstance(spec, BMDrift):
        th = spec.theta
        return 0.25 * (1.0 - th / math.sqrt(lam + th * th)) if lam + th > 0 else 0.25
    if isinstance(spec, Bessel):
        return 1.0 / (2.0 * (1.0 + 2.0 * spec.s))
    raise DomainError(f"no closed form for {spec.kind}")


def t_closed(spec: DiffusionSpec, lam: float) -> float:
    lam = _lam(lam)
    if isinstance(spec, BMDrift):
        return -0.25 / math.sqrt(lam + spec.theta ** 2)
    if isinstance(spec, Bessel):
        return -bessel_t_constant(spec.s) / math.sqrt(lam)
    raise DomainError(f"no closed form for {spec.kind}")


def s_closed(spec: DiffusionSpec, lam: float) -> float:
    lam = _lam(lam)
    if isinstance(spec, BMDrift):
        th = spec.theta
        root = math.sqrt(lam + th * th)
        # 1 / (root - th) computed as (root + th) / lam
        return 0.25 * (root + th) / lam / root
    if isinstance(spec, Bessel):
        return spec.s / (2 * spec.s + 1) / lam
    raise DomainError(f"no closed form for {spec.kind}")


# ---------------------------------------------------------------------------
# measures and Stieltjes-type symbols
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureAlpha:
    """Finite complex measure on [0, inf]: atoms plus an optional sampled density.

    ``density`` is a triple (grid, quadrature weights, complex values); the
    measure of a set is approximated by sum(weights * values) over the grid
    points it contains.
    """

    atoms: tuple = ()
    density: Optional[tuple] = None

    def __post_init__(self):
        atoms = []
        for loc, w in self.atoms:
            loc = float(loc)
            if not (loc >= 0):
                raise DomainError(f"atom location must be >= 0 or AT_INFINITY, got {loc!r}")
            w = complex(w)
            if not (math.isfinite(w.real) and math.isfinite(w.imag)):
                raise DomainError("atom weights must be finite")
            atoms.append((loc, w))
        object.__setattr__(self, "atoms", tuple(atoms))
        if self.density is not None:
            grid, wts, vals = (np.asarray(v) for v in self.density)
            grid = grid.astype(float)
            wts = wts.astype(float)
            vals = vals.astype(complex)
            if not (grid.ndim == 1 and grid.shape == wts.shape == vals.shape):
                raise DomainError("density grid, weights and values must be 1-d and equal length")
            if np.any(grid <= 0) or not np.all(np.isfinite(grid)):
                raise DomainError("density grid must be positive and finite")
            if np.any(wts < 0) or not np.all(np.isfinite(vals)):
                raise DomainError("density weights must be >= 0 and values finite")
            for arr in (grid, wts, vals):
                arr.setflags(write=False)
            object.__setattr__(self, "density", (grid, wts, vals))

    @classmethod
    def dirac(cls, loc: float = 0.0, weight: complex = 1.0) -> "MeasureAlpha":
        return cls(((loc, weight),))

    @classmethod
    def zero(cls) -> "MeasureAlpha":
        return cls(())

    @property
    def has_infinite_atom(self) -> bool:
        return any(math.isinf(loc) for loc, _ in self.atoms)

    def __add__(self, other: "MeasureAlpha") -> "MeasureAlpha":
        if self.density is not None and other.density is not None:
            g = np.concatenate([self.density[0], other.density[0]])
            w = np.concatenate([self.density[1], other.density[1]])
            v = np.concatenate([self.density[2], other.density[2]])
            dens = (g, w, v)
        else:
            dens = self.density if self.density is not None else other.density
        return MeasureAlpha(self.atoms + other.atoms, dens)

    def scaled(self, c: complex) -> "MeasureAlpha":
        dens = None
        if self.density is not None:
            dens = (self.density[0], self.density[1], self.density[2] * c)
        return MeasureAlpha(tuple((loc, w * c) for loc, w in self.atoms), dens)

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray], at_inf: Optional[complex] = None) -> complex:
        total = 0j
        for loc, w in self.atoms:
            if math.isinf(loc):
                if at_inf is None:
                    raise DomainError("this symbol does not accept an atom at infinity")
                total += w * at_inf
            else:
                total += w * complex(fn(np.array([loc]))[0])
        if self.density is not None:
            grid, wts, vals = self.density
            total += complex(np.sum(wts * vals * fn(grid)))
        return total


def total_variation(alpha: MeasureAlpha) -> float:
    tv = float(sum(abs(w) for _, w in alpha.atoms))
    if alpha.density is not None:
        _, wts, vals = alpha.density
        tv += float(np.sum(wts * np.abs(vals)))
    return tv


def _x(x, allow_zero):
    x = float(x)
    if not math.isfinite(x) or x < 0 or (x == 0 and not allow_zero):
        raise DomainError(f"x must be {'>=' if allow_zero else '>'} 0 and finite, got {x!r}")
    return x


def phi_stieltjes_w(alpha: MeasureAlpha, x: float) -> complex:
    """int (1 - m / sqrt(m^2 + x)) d alpha(m).  At x = 0 an atom at m = 0 contributes 1."""
    x = _x(x, allow_zero=True)
    if alpha.has_infinite_atom:
        raise DomainError("first-order W representation lives on [0, inf); atom at infinity rejected")

    def f(m):
        m = np.asarray(m, float)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = 1.0 - m / np.sqrt(m * m + x)
        return np.where(m == 0, 1.0, r)

    return alpha.integrate(f)


def phi_stieltjes_r1(alpha: MeasureAlpha, x: float) -> complex:
    """int d alpha(m) / sqrt(x + m)."""
    x = float(x)
    if alpha.has_infinite_atom:
        raise DomainError("first-order Riesz representation lives on [0, inf); atom at infinity rejected")
    if not (math.isfinite(x) and x >= 0):
        raise DomainError(f"x must be finite and > 0, got {x!r}")
    if x == 0 and any(loc == 0 for loc, _ in alpha.atoms):
        raise DomainError("x must be > 0 when alpha has an atom at 0")

    def f(m):
        return 1.0 / np.sqrt(x + np.asarray(m, float))

    return alpha.integrate(f)


def r2_kernel(m, x):
    """1 / (sqrt(x + m^2) (sqrt(x + m^2) - m)), stable for large m."""
    m = np.asarray(m, float)
    root = np.sqrt(x + m * m)
    return (root + m) / (root * x)


def phi_stieltjes_r2(alpha: MeasureAlpha, x: float) -> complex:
    """int d alpha(m) / (sqrt(x + m^2)(sqrt(x + m^2) - m)) over [0, inf]."""
    x = _x(x, allow_zero=False)
    return alpha.integrate(lambda m: r2_kernel(m, x), at_inf=2.0 / x)


# ---------------------------------------------------------------------------
# symbol objects
# ---------------------------------------------------------------------------

SUP_GRID = tuple(np.geomspace(1.0, 1e4, 41).tolist())


class MultiplierSymbol:
    """A memoised map lambda -> Phi(lambda) with provenance and a sup bound.

    ``sup_bound`` is the analytic bound where one is known (for example
    |alpha| for the W representation, 1/2 for extension symbols) and
    otherwise the maximum of |Phi| over ``SUP_GRID``.
    """

    def __init__(self, evaluator: Callable[[float], complex], kind: str,
                 params: Optional[dict] = None, sup_bound: Optional[float] = None,
                 allow_zero: bool = False):
        self._fn = evaluator
        self.kind = kind
        self.params = dict(params or {})
        self.allow_zero = allow_zero
        self._cache: dict[float, complex] = {}
        self._lock = threading.Lock()
        if sup_bound is None:
            sup_bound = max(abs(self(x)) for x in SUP_GRID)
        self.sup_bound = float(sup_bound)

    def __call__(self, lam: float) -> complex:
        lam = float(lam)
        if lam < 0 or (lam == 0 and not self.allow_zero) or not math.isfinite(lam):
            raise DomainError(f"{self.kind} symbol needs lambda {'>=' if self.allow_zero else '>'} 0, got {lam!r}")
        with self._lock:
            hit = self._cache.get(lam)
        if hit is not None:
            return hit
        val = complex(self._fn(lam))
        if not (math.isfinite(val.real) and math.isfinite(val.imag)):
            raise NumericError(f"{self.kind} symbol is not finite", {"lambda": lam})
        with self._lock:
            self._cache[lam] = val
        return val

    def evaluate(self, lams) -> np.ndarray:
        lams = np.asarray(lams, float)
        flat = np.array([self(v) for v in lams.ravel()], dtype=complex)
        return flat.reshape(lams.shape)

    def __repr__(self):
        return f"MultiplierSymbol({self.kind}, {self.params})"


def extension_symbol(spec: DiffusionSpec, cfg: QuadratureConfig = DEFAULT_QUAD) -> MultiplierSymbol:
    return MultiplierSymbol(lambda x: phi_extension(spec, x, cfg=cfg), "ExtensionQuadrature",
                            {"spec": repr(spec)}, sup_bound=0.5)


def stieltjes_w_symbol(alpha: MeasureAlpha) -> MultiplierSymbol:
    return MultiplierSymbol(lambda x: phi_stieltjes_w(alpha, x), "StieltjesW",
                            {"total_variation": total_variation(alpha)},
                            sup_bound=total_variation(alpha), allow_zero=True)


def stieltjes_r1_symbol(alpha: MeasureAlpha) -> MultiplierSymbol:
    return MultiplierSymbol(lambda x: phi_stieltjes_r1(alpha, x), "StieltjesRiesz1",
                            {"total_variation": total_variation(alpha)})


def stieltjes_r2_symbol(alpha: MeasureAlpha) -> MultiplierSymbol:
    return MultiplierSymbol(lambda x: phi_stieltjes_r2(alpha, x), "StieltjesRiesz2",
                            {"total_variation": total_variation(alpha)})


def closed_form_symbol(tag: str, spec: DiffusionSpec) -> MultiplierSymbol:
    fns = {"phi": phi_closed, "t": t_closed, "s": s_closed}
    if tag not in fns:
        raise DomainError(f"unknown closed-form tag {tag!r}; expected one of {sorted(fns)}")
    fn = fns[tag]
    bound = 0.5 if tag == "phi" else None
    return MultiplierSymbol(lambda x: fn(spec, x), "ClosedForm", {"tag": tag, "spec": repr(spec)},
                            sup_bound=bound, allow_zero=(tag == "phi"))


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constants:
    p: float
    p_star: float
    burkholder: float
    choi_cot: float
    c_p_asymptotic: float
    choi_lower: float
    choi_upper: float


def constants(p: float) -> Constants:
    p = float(p)
    if not (math.isfinite(p) and p > 1):
        raise DomainError(f"p must be finite and > 1, got {p!r}")
    p_star = max(p, p / (p - 1.0))
    ell = math.log((1.0 + math.exp(-2.0)) / 2.0)
    q = math.exp(-2.0) / (1.0 + math.exp(-2.0))
    alpha2 = ell * ell + 0.5 * ell - 2.0 * q * q
    return Constants(
        p=p,
        p_star=p_star,
        burkholder=p_star - 1.0,
        choi_cot=1.0 / math.tan(math.pi / (2.0 * p_star)),
        c_p_asymptotic=p / 2.0 + 0.5 * ell + alpha2 / p,
        choi_lower=max(1.0, p_star / 2.0 - 1.0),
        choi_upper=p_star / 2.0,
    )


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def parse_measure(lines: Sequence[str]) -> MeasureAlpha:
    atoms, dg, dw, dv = [], [], [], []
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "atom" and len(parts) == 4:
            loc = AT_INFINITY if parts[1].lower() == "inf" else float(parts[1])
            atoms.append((loc, complex(float(parts[2]), float(parts[3]))))
        elif parts[0] == "density" and len(parts) == 5:
            dg.append(float(parts[1]))
            dw.append(float(parts[2]))
            dv.append(complex(float(parts[3]), float(parts[4])))
        else:
            raise DomainError(f"cannot parse measure line {raw!r}")
    dens = (dg, dw, dv) if dg else None
    return MeasureAlpha(tuple(atoms), dens)


def load_measure(path) -> MeasureAlpha:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_measure(fh.readlines())


def dump_measure(alpha: MeasureAlpha) -> str:
    out = []
    for loc, w in alpha.atoms:
        where = "inf" if math.isinf(loc) else repr(loc)
        out.append(f"atom {where} {w.real!r} {w.imag!r}")
    if alpha.density is not None:
        for g, wt, v in zip(*(arr.tolist() for arr in alpha.density)):
            out.append(f"density {g!r} {wt!r} {v.real!r} {v.imag!r}")
    return "\n".join(out) + ("\n" if out else "")
