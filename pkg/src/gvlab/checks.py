"""Verification routines shared by the command line and the acceptance tests.

Each check returns a :class:`CheckResult` whose ``details`` hold plain
numbers and strings only, so they serialise to JSON unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .montecarlo import (MCConfig, compare_to_oracle, fk_estimate, fk_oracle, gv_estimate_all,
                         gv_oracle, occupation_mc)
from .multiplier import bessel_t_constant, phi_alt, phi_closed, phi_extension, s_closed, s_symbol, t_closed, t_symbol
from .special_fn import mcd2_pair
from .torus_spectral import (LAPLACIAN, TorusField, TorusGrid, schrodinger_build,
                             second_riesz_symbol, stinga_torrea_residual)
from .vertical_diffusion import BMDrift, Bessel, DiffusionSpec, SampledFunction, occupation_expectation


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "details": self.details}


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


# ---------------------------------------------------------------------------
# deterministic checks
# ---------------------------------------------------------------------------

MCD2_PAIRS = ((2.0, 0.5), (1.0, 0.25), (3.0, 0.5), (2.0, 0.25), (4.0, 1.0),
              (3.0, 1.0), (5.0, 2.0), (2.5, 0.75), (1.5, 0.1), (6.0, 2.5))


def mcd2_check(pairs: Sequence = MCD2_PAIRS, tol: float = 1e-6) -> CheckResult:
    rows = []
    ok = True
    for alpha, nu in pairs:
        lhs, rhs = mcd2_pair(alpha, nu)
        err = _rel(lhs, rhs)
        rows.append({"alpha": alpha, "nu": nu, "lhs": lhs, "rhs": rhs, "rel_error": err})
        ok &= err <= tol
    return CheckResult("mcd2", ok, {"tol": tol, "pairs": rows})


def multiplier_check(lams=(0.1, 1.0, 10.0, 100.0), tol: float = 1e-6,
                     bessel_tol: float = 1e-5) -> CheckResult:
    """Quadrature symbols against closed forms for the drifted Brownian and Bessel families."""
    rows = []
    ok = True
    for sigma in (1.0, 2.0):
        for m in (0.0, 1.0, 2.0):
            spec = BMDrift(sigma, m)
            for lam in lams:
                ref = phi_closed(spec, lam)
                a, b = phi_extension(spec, lam), phi_alt(spec, lam)
                err = max(_rel(a, ref), _rel(b, ref), _rel(a, b))
                rows.append({"spec": repr(spec), "lambda": lam, "closed": ref, "extension": a,
                             "alt": b, "rel_error": err})
                ok &= err <= tol
    for s in (0.25, 0.5, 0.75):
        spec = Bessel(s)
        ref = 1.0 / (2.0 * (2.0 - spec.gamma_))
        for lam in lams:
            a = phi_extension(spec, lam)
            err = _rel(a, ref)
            rows.append({"spec": repr(spec), "lambda": lam, "closed": ref, "extension": a, "rel_error": err})
            ok &= err <= bessel_tol
    return CheckResult("multiplier", ok, {"tol": tol, "bessel_tol": bessel_tol, "rows": rows})


def symbol_check(lams=(0.1, 1.0, 10.0, 100.0), tol: float = 1e-5) -> CheckResult:
    """t and s quadratures against their closed forms, plus the s = 1/2 cross-check."""
    rows = []
    ok = True
    specs = [BMDrift(1.0, 0.0), BMDrift(1.0, 1.0), BMDrift(2.0, 1.0),
             Bessel(0.25), Bessel(0.5), Bessel(0.75)]
    for spec in specs:
        for lam in lams:
            t_q, t_c = t_symbol(spec, lam), t_closed(spec, lam)
            s_q, s_c = s_symbol(spec, lam), s_closed(spec, lam)
            err = max(_rel(t_q, t_c), _rel(s_q, s_c))
            rows.append({"spec": repr(spec), "lambda": lam, "t": t_q, "t_closed": t_c,
                         "s": s_q, "s_closed": s_c, "rel_error": err})
            ok &= err <= tol
    # Bessel s = 1/2 is Brownian motion without drift: both constants have magnitude 1/4
    b, w = Bessel(0.5), BMDrift(1.0, 0.0)
    cross = {"t_bessel": t_closed(b, 1.0), "t_bm": t_closed(w, 1.0),
             "s_bessel": s_closed(b, 1.0), "s_bm": s_closed(w, 1.0),
             "bessel_t_constant": bessel_t_constant(0.5)}
    cross_ok = (abs(abs(cross["t_bessel"]) - 0.25) <= 1e-12 and abs(abs(cross["t_bm"]) - 0.25) <= 1e-12
                and abs(cross["s_bessel"] - cross["s_bm"]) <= 1e-12 and abs(abs(cross["s_bm"]) - 0.25) <= 1e-12)
    return CheckResult("symbols", ok and cross_ok, {"tol": tol, "rows": rows, "cross_check": cross})


STINGA_WINDOW = (1.0, 5.0)
STINGA_STEPS = (128, 256)


def stinga_check(n: int = 64, window=STINGA_WINDOW, steps=STINGA_STEPS,
                 band=(3.5, 4.5)) -> CheckResult:
    """Second-order convergence of the (L + B) U residual under halving of the y step."""
    g = TorusGrid(1, n)
    x, = g.coords()
    fields = {"sin": np.sin(x), "three_mode": np.sin(x) + 0.5 * np.cos(2 * x) - 0.25 * np.sin(3 * x)}
    pots = {"zero": None, "minus_one_plus_cos": -(1.0 + np.cos(x))}
    rows = []
    ok = True
    for spec in (BMDrift(1.0, 0.0), BMDrift(1.0, 1.0), Bessel(0.3), Bessel(0.75)):
        for fname, fv in fields.items():
            for vname, vv in pots.items():
                op = LAPLACIAN if vv is None else schrodinger_build(g, TorusField(g, vv))
                f = TorusField(g, fv)
                res = [stinga_torrea_residual(spec, op, f, np.linspace(window[0], window[1], k + 1))
                       for k in steps]
                ratio = res[0] / res[1]
                good = band[0] <= ratio <= band[1]
                ok &= good
                rows.append({"spec": repr(spec), "f": fname, "V": vname, "residuals": res,
                             "ratio": ratio, "passed": good})
    return CheckResult("stinga", ok, {"window": list(window), "steps": list(steps),
                                      "band": list(band), "rows": rows})


def limit_check(n: int = 64, theta: float = 1e3, tol: float = 1e-3) -> CheckResult:
    """Second Riesz symbols at large theta against -2 k_i k_j / |k|^2, and the c_p bracket."""
    from .multiplier import constants

    g = TorusGrid(2, n)
    k1, k2 = g.frequencies()
    k_sq = k1 * k1 + k2 * k2
    gaps = {}
    with np.errstate(divide="ignore", invalid="ignore"):
        for i, j in ((0, 0), (0, 1), (1, 1)):
            m = second_riesz_symbol(i, j, theta).multiplier(g)
            lim = np.where(k_sq > 0, -2.0 * (k1, k2)[i] * (k1, k2)[j] / k_sq, 0.0)
            gaps[f"{i}{j}"] = float(np.max(np.abs(m - lim)))
    cp = []
    cp_ok = True
    for p in (20.0, 40.0, 80.0):
        c = constants(p)
        inside = c.choi_lower <= c.c_p_asymptotic <= c.choi_upper
        cp_ok &= inside
        cp.append({"p": p, "c_p_asymptotic": c.c_p_asymptotic, "lower": c.choi_lower,
                   "upper": c.choi_upper, "inside": inside})
    ok = max(gaps.values()) <= tol and cp_ok
    return CheckResult("limits", ok, {"theta": theta, "tol": tol, "sup_gap": gaps, "c_p": cp})


# ---------------------------------------------------------------------------
# Monte Carlo checks
# ---------------------------------------------------------------------------

def occupation_cases() -> list:
    """(label, spec, g, y0) triples used by the occupation check."""
    expo = SampledFunction.from_callable(lambda z: np.exp(-z), np.linspace(0.0, 40.0, 4001))
    box = SampledFunction(np.array([0.0, 1.0, 1.0 + 1e-12]), np.array([1.0, 1.0, 0.0]))
    return [("drift_exp", BMDrift(1.0, 1.0), expo, 2.0),
            ("bm_indicator", BMDrift(1.0, 0.0), box, 1.0),
            ("bessel_exp", Bessel(0.75), expo, 1.0)]


def occupation_check(cfg: MCConfig, z: float = 3.0) -> CheckResult:
    rows = []
    ok = True
    for label, spec, g, y0 in occupation_cases():
        exact = occupation_expectation(spec, g, y0)
        mean, se, flagged = occupation_mc(spec, g, y0, cfg.with_(y0=y0))
        zs = abs(mean - exact) / se if se > 0 else math.inf
        good = zs <= z
        ok &= good
        rows.append({"case": label, "spec": repr(spec), "y0": y0, "expected": exact,
                     "mean": mean, "std_error": se, "z": zs, "n_flagged": flagged, "passed": good})
    return CheckResult("occupation", ok, {"z": z, "rows": rows})


def fk_check(cfg: MCConfig, n: int = 64, t: float = 0.5, tol: float = 0.05):
    g = TorusGrid(1, n)
    x, = g.coords()
    V = TorusField(g, -(1.0 + np.cos(x)))
    f = TorusField(g, np.sin(x))
    res = fk_estimate(V, t, f, cfg)
    oracle = fk_oracle(V, t, f, cfg.n_bins)
    err = float(np.linalg.norm(res.estimate.values - oracle) / np.linalg.norm(oracle))
    return CheckResult("fk", err <= tol, {"t": t, "tol": tol, "relative_l2_error": err,
                                          "n_paths": cfg.n_paths}), res


def gv_check(f: TorusField, spec: DiffusionSpec, cfg: MCConfig, V: Optional[TorusField] = None,
             i: int = 0, j: int = 0, kinds: str = "WTS", z: float = 2.0,
             min_fraction: float = 0.9, max_rel_l2: float = 0.1):
    """Monte Carlo W, T_i, S_ij against the spectral oracle; returns (CheckResult, GVRun, z-scores)."""
    run = gv_estimate_all(f, spec, cfg, V, i, j)
    rows = {}
    zscores = {}
    ok = True
    for k in kinds:
        oracle = gv_oracle(k, f, spec, cfg.y0, cfg.n_bins, V, i, j)
        cmp = compare_to_oracle(getattr(run, k), oracle, z)
        good = cmp["fraction_within"] >= min_fraction and cmp["relative_l2_error"] <= max_rel_l2
        ok &= good
        zscores[k] = cmp["z_scores"]
        rows[k] = {"fraction_within": cmp["fraction_within"], "relative_l2_error": cmp["relative_l2_error"],
                   "max_abs_z": cmp["max_abs_z"], "passed": good}
    return CheckResult("gv", ok, {"z": z, "min_fraction": min_fraction, "max_rel_l2": max_rel_l2,
                                  "results": rows}), run, zscores
