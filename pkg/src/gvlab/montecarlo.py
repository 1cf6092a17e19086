"""Monte Carlo for the background process (X_t, eta_t).

X is Brownian motion on the torus with generator Delta (so each coordinate
increment over a step h has variance 2h), started from the uniform law;
eta is the vertical diffusion started at y0 and killed at 0.  The
Gundy-Varopoulos estimators return conditional means given the exit
position X_tau, binned on an equal-width grid.

Reproducibility: each path owns a counter-based random stream keyed on
(seed, path_index).  Per-path results are stored by index and reduced
with exactly rounded sums (``math.fsum``), so any split of the paths over
worker threads gives bit-identical output.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import _mc_kernels as kern
from .errors import DomainError, NumericError
from .multiplier import phi_extension, s_symbol, t_symbol
from .torus_spectral import (SchrodingerOperator, TorusField, TorusGrid, heat_semigroup,
                             schrodinger_build)
from .vertical_diffusion import (BMDrift, Bessel, DiffusionSpec, SampledFunction, Tabulated,
                                 _require_admissible)


@dataclass(frozen=True)
class MCConfig:
    """Simulation parameters.

    ``y_fine`` controls step adaptivity: above that height the time step
    grows like dt (eta / y_fine)^2, which keeps relative moves of eta small
    while letting long excursions finish.  ``y_fine = inf`` gives a fixed
    step.
    """

    dt: float = 1e-3
    n_paths: int = 10_000
    y0: float = 6.0
    seed: int = 0
    n_bins: int = 32
    max_steps: int = 1_000_000
    y_fine: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError("dt must be positive")
        if not self.y0 > 0:
            raise DomainError("y0 must be positive")
        if self.dt > 0.01 * self.y0:
            raise DomainError(f"dt must be <= 0.01 * y0 (dt={self.dt}, y0={self.y0})")
        if int(self.n_paths) < 1:
            raise DomainError("n_paths must be >= 1")
        if int(self.max_steps) < 1:
            raise DomainError("max_steps must be >= 1")
        nb = int(self.n_bins)
        if nb < 8 or nb & (nb - 1):
            raise DomainError("n_bins must be a power of two >= 8")
        if not self.y_fine > 0:
            raise DomainError("y_fine must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must fit in 64 unsigned bits")
        if int(self.threads) < 1:
            raise DomainError("threads must be >= 1")

    def with_(self, **kw) -> "MCConfig":
        d = asdict(self)
        d.update(kw)
        return MCConfig(**d)


@dataclass
class EnsembleResult:
    estimate: TorusField
    std_error: np.ndarray
    n_effective: np.ndarray
    n_flagged: int = 0

    @property
    def bin_grid(self) -> TorusGrid:
        return self.estimate.grid

    def bin_centers(self) -> tuple:
        nb = self.bin_grid.n
        c = (np.arange(nb) + 0.5) * 2 * math.pi / nb
        return tuple(np.meshgrid(*([c] * self.bin_grid.dim), indexing="ij"))

    def to_csv(self, centers: Optional[tuple] = None) -> str:
        dim = self.bin_grid.dim
        centers = self.bin_centers() if centers is None else centers
        out = io.StringIO()
        head = ["bin_center"] + (["bin_center2"] if dim == 2 else [])
        out.write(",".join(head + ["estimate_re", "estimate_im", "std_error", "n_effective"]) + "\n")
        est = self.estimate.values.ravel()
        se = self.std_error.ravel()
        ne = self.n_effective.ravel()
        cs = [c.ravel() for c in centers]
        for r in range(est.size):
            row = [f"{c[r]:.17g}" for c in cs]
            row += [f"{est[r].real:.17g}", f"{est[r].imag:.17g}", f"{se[r]:.17g}", str(int(ne[r]))]
            out.write(",".join(row) + "\n")
        return out.getvalue()


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _spec_args(spec: DiffusionSpec):
    dummy = np.zeros(2)
    if isinstance(spec, BMDrift):
        return kern.KIND_BMDRIFT, float(spec.sigma), float(spec.m), dummy, dummy, dummy
    if isinstance(spec, Bessel):
        return kern.KIND_BESSEL, float(spec.gamma_), 0.0, dummy, dummy, dummy
    if isinstance(spec, Tabulated):
        return (kern.KIND_TABULATED, 0.0, 0.0, np.ascontiguousarray(spec.y_grid),
                np.ascontiguousarray(spec.a_vals), np.ascontiguousarray(spec.b_vals))
    raise DomainError(f"unsupported diffusion {spec!r}")


def _chunks(n: int, threads: int):
    # fixed chunking independent of the thread count keeps scheduling simple
    size = max(1, min(4096, -(-n // max(1, 4 * threads))))
    return [(s, min(n, s + size)) for s in range(0, n, size)]


def _run(fn, n: int, threads: int):
    """Call fn(start, stop) over chunks, possibly concurrently."""
    chunks = _chunks(n, threads)
    if threads == 1:
        for s, e in chunks:
            fn(s, e)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(fn, s, e) for s, e in chunks]:
            fut.result()


def _fsum_complex(vals) -> complex:
    return complex(math.fsum(vals.real), math.fsum(vals.imag))


def _bin_reduce(bins: np.ndarray, vals: np.ndarray, keep: np.ndarray, n_total: int):
    """Per-bin mean, standard error and count with exactly rounded sums."""
    b = bins[keep]
    v = vals[keep]
    order = np.argsort(b, kind="stable")
    b, v = b[order], v[order]
    edges = np.searchsorted(b, np.arange(n_total + 1))
    mean = np.zeros(n_total, dtype=complex)
    se = np.zeros(n_total)
    count = np.zeros(n_total, dtype=np.int64)
    for q in range(n_total):
        seg = v[edges[q]:edges[q + 1]]
        n = seg.size
        count[q] = n
        if n == 0:
            continue
        m = _fsum_complex(seg) / n
        mean[q] = m
        if n > 1:
            dev = np.abs(seg - m) ** 2
            se[q] = math.sqrt(math.fsum(dev) / (n - 1) / n)
    return mean, se, count


def _mode_coefficients(f: TorusField):
    """(k-vectors, coefficients c_k) with f(x) = sum c_k e^{i k.x}, dropping negligible modes."""
    c = np.fft.fftn(f.values) / f.grid.size
    ks = f.grid.frequencies()
    mag = np.abs(c)
    keep = mag > 1e-13 * max(1e-300, float(mag.max()))
    kx = ks[0][keep].astype(float)
    ky = ks[1][keep].astype(float) if f.grid.dim == 2 else np.zeros_like(kx)
    return kx, ky, c[keep]


def _potential_op(V, grid: TorusGrid) -> Optional[SchrodingerOperator]:
    if V is None:
        return None
    if isinstance(V, SchrodingerOperator):
        return None if V.is_free else V
    if not isinstance(V, TorusField):
        raise DomainError("V must be a TorusField, a SchrodingerOperator or None")
    if np.all(V.values == 0):
        return None
    return schrodinger_build(grid, V)


@dataclass
class ModeTable:
    """U_f(x, y) = sum_q A_q(y) e^{i k_q . x} tabulated on a geometric y grid."""

    kx: np.ndarray
    ky: np.ndarray
    ynodes: np.ndarray
    a: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    mu: np.ndarray  # spectral values carried (for diagnostics)

    @property
    def log_lo(self):
        return math.log(self.ynodes[0])

    @property
    def log_step(self):
        return math.log(self.ynodes[1] / self.ynodes[0])


def _y_nodes(spec: DiffusionSpec, mus: np.ndarray, y0: float, per_decade: int = 40,
             y_lo: float = 1e-6) -> np.ndarray:
    pos = mus[mus > 0]
    if pos.size == 0:
        top = 2.0 * y0
    else:
        top = 40.0 * spec.decay_length(float(pos.min()))
    if isinstance(spec, Tabulated):
        top = min(top, spec.y_max)
    top = float(min(max(top, 1.0), 1e5))
    n = max(16, int(math.ceil(per_decade * math.log10(top / y_lo))) + 1)
    return np.geomspace(y_lo, top, n)


def _kernel_columns(spec, mus, ynodes):
    K = np.empty((ynodes.size, mus.size))
    dK = np.empty_like(K)
    for j, m in enumerate(mus):
        if m == 0:
            K[:, j] = 1.0
            dK[:, j] = 0.0
        else:
            K[:, j] = np.asarray(spec.kernel(ynodes, float(m)), float)
            dK[:, j] = np.asarray(spec.kernel_dy(ynodes, float(m)), float)
    return K, dK


def build_mode_table(spec: DiffusionSpec, f: TorusField, V=None, y0: float = 6.0) -> ModeTable:
    """Tabulate A_q, dA_q/dy and d2A_q/dy2 (the last from the ODE B A = mu A)."""
    grid = f.grid
    op = _potential_op(V, grid)
    if op is None:
        kx, ky, c = _mode_coefficients(f)
        mus = kx * kx + ky * ky
        uniq, inv = np.unique(mus, return_inverse=True)
        ynodes = _y_nodes(spec, uniq, y0)
        K, dK = _kernel_columns(spec, uniq, ynodes)
        A = (c[:, None] * K[:, inv].T)
        A1 = (c[:, None] * dK[:, inv].T)
        mu_rows = mus
    else:
        coeff = op.coefficients(f)
        active = np.abs(coeff) > 1e-14 * max(1e-300, float(np.abs(coeff).max()))
        lam = -op.eigenvalues[active]
        lam[lam < 1e-10 * max(1.0, float(np.abs(op.eigenvalues).max()))] = 0.0
        vecs = op.eigenvectors[:, active]
        ehat = np.fft.fftn(vecs.T.reshape((-1,) + grid.shape), axes=tuple(range(1, grid.dim + 1)))
        ehat = ehat.reshape(vecs.shape[1], -1).T / grid.size  # (modes, components)
        ynodes = _y_nodes(spec, lam, y0)
        K, dK = _kernel_columns(spec, lam, ynodes)
        cw = coeff[active]
        A = ehat @ (cw[:, None] * K.T)
        A1 = ehat @ (cw[:, None] * dK.T)
        ks = [k.ravel() for k in grid.frequencies()]
        mag = np.abs(A).max(axis=1)
        keep = mag > 1e-12 * max(1e-300, float(mag.max()))
        A, A1 = A[keep], A1[keep]
        kx = ks[0][keep].astype(float)
        ky = ks[1][keep].astype(float) if grid.dim == 2 else np.zeros_like(kx)
        # effective mu per Fourier row is not single valued; store |k|^2 for reference
        mu_rows = kx * kx + ky * ky
        # the ODE identity for A2 needs the spectral mix: sum_j mu_j K_j c_j ehat
        MA = ehat @ (cw[:, None] * (lam[:, None] * K.T))
        MA = MA[keep]
    a2 = np.asarray(spec.a(ynodes), float) ** 2
    bb = np.asarray(spec.b(ynodes), float)
    if op is None:
        A2 = (mu_rows[:, None] * A - bb[None, :] * A1) / a2[None, :]
    else:
        A2 = (MA - bb[None, :] * A1) / a2[None, :]
    return ModeTable(np.ascontiguousarray(kx), np.ascontiguousarray(ky), ynodes,
                     np.ascontiguousarray(A, dtype=complex), np.ascontiguousarray(A1, dtype=complex),
                     np.ascontiguousarray(A2, dtype=complex), mu_rows)


def _vgrid(op: Optional[SchrodingerOperator], grid: TorusGrid):
    if op is None:
        return False, np.zeros((2, 2)), 2
    v = op.V.values.real
    if grid.dim == 1:
        v = v.reshape(-1, 1)
    return True, np.ascontiguousarray(v), grid.n


def _check_axes(dim, i, j):
    for ax in (i, j):
        if ax not in range(dim):
            raise DomainError(f"axis {ax} out of range for a {dim}-dimensional torus")


# ---------------------------------------------------------------------------
# Gundy-Varopoulos estimators
# ---------------------------------------------------------------------------

@dataclass
class GVRun:
    W: EnsembleResult
    T: EnsembleResult
    S: EnsembleResult
    axes: tuple
    table: ModeTable


def gv_estimate_all(f: TorusField, spec: DiffusionSpec, cfg: MCConfig, V=None,
                    i: int = 0, j: int = 0) -> GVRun:
    """One simulation feeding the W, T_i and S_ij estimators together."""
    _require_admissible(spec)
    dim = f.grid.dim
    _check_axes(dim, i, j)
    op = _potential_op(V, f.grid)
    table = build_mode_table(spec, f, op, cfg.y0)
    has_v, vg, nv = _vgrid(op, f.grid)
    kind, p0, p1, ty, ta, tb = _spec_args(spec)
    n = int(cfg.n_paths)
    out_bin = np.zeros(n, dtype=np.int64)
    out_w = np.zeros(n, dtype=complex)
    out_t = np.zeros(n, dtype=complex)
    out_s = np.zeros(n, dtype=complex)
    out_flag = np.zeros(n, dtype=np.bool_)

    def work(s, e):
        kern.gv_paths(s, e, np.uint64(cfg.seed), dim, kind, p0, p1, ty, ta, tb,
                      float(cfg.dt), float(cfg.y0), float(cfg.y_fine), int(cfg.max_steps), i, j,
                      has_v, vg, nv, table.kx, table.ky, table.ynodes, table.log_lo, table.log_step,
                      table.a, table.a1, table.a2, int(cfg.n_bins),
                      out_bin[s:e], out_w[s:e], out_t[s:e], out_s[s:e], out_flag[s:e])

    _run(work, n, int(cfg.threads))
    keep = ~out_flag
    n_flag = int(out_flag.sum())
    bgrid = TorusGrid(dim, int(cfg.n_bins))
    res = []
    for vals in (out_w, out_t, out_s):
        mean, se, cnt = _bin_reduce(out_bin, vals, keep, bgrid.size)
        res.append(EnsembleResult(TorusField(bgrid, mean), se.reshape(bgrid.shape),
                                  cnt.reshape(bgrid.shape), n_flag))
    return GVRun(res[0], res[1], res[2], (i, j), table)


def gv_estimate_W(f, spec, cfg, V=None) -> EnsembleResult:
    return gv_estimate_all(f, spec, cfg, V).W


def gv_estimate_Ti(f, i, spec, cfg, V=None) -> EnsembleResult:
    return gv_estimate_all(f, spec, cfg, V, i=i, j=i).T


def gv_estimate_Sij(f, i, j, spec, cfg, V=None) -> EnsembleResult:
    if f.grid.dim == 1 and (i, j) != (0, 0):
        raise DomainError("on T^1 only S_00 exists")
    return gv_estimate_all(f, spec, cfg, V, i=i, j=j).S


# ---------------------------------------------------------------------------
# spectral oracles for the binned estimators
# ---------------------------------------------------------------------------

def _bin_average(grid: TorusGrid, kx, ky, coeff, n_bins: int) -> np.ndarray:
    """Average of sum_k coeff_k e^{ik.x} over each equal-width bin."""
    w = 2 * math.pi / n_bins
    centers = (np.arange(n_bins) + 0.5) * w
    cs = np.meshgrid(*([centers] * grid.dim), indexing="ij")
    out = np.zeros(cs[0].shape, dtype=complex)
    for q in range(len(coeff)):
        k = (kx[q], ky[q])[:grid.dim]
        phase = sum(kd * c for kd, c in zip(k, cs))
        damp = np.prod([np.sinc(kd * w / 2 / math.pi) for kd in k])
        out += coeff[q] * damp * np.exp(1j * phase)
    return out


def _y_quadrature(spec: DiffusionSpec, y0: float, top: float, panels: int = 80, order: int = 8):
    edges = np.unique(np.concatenate([[0.0], np.geomspace(1e-8, top, panels), [y0]]))
    edges = edges[edges <= top]
    gx, gw = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1], edges[1:]
    nodes = ((hi - lo)[:, None] * (gx[None, :] + 1) / 2 + lo[:, None]).ravel()
    weights = ((hi - lo)[:, None] * gw[None, :] / 2).ravel()
    return nodes, weights


def _spectral_derivative(grid: TorusGrid, axis: int, values: np.ndarray) -> np.ndarray:
    k = grid.frequencies()[axis]
    return np.fft.ifftn(1j * k * np.fft.fftn(values))


def gv_oracle(kind: str, f: TorusField, spec: DiffusionSpec, y0: float, n_bins: int,
              V=None, i: int = 0, j: int = 0) -> np.ndarray:
    """Bin averages of the operator that the finite-y0 estimator targets.

    ``kind`` is "W", "T" or "S".  The y0 -> infinity operators are recovered
    with ``y0 = math.inf``.
    """
    grid = f.grid
    _check_axes(grid.dim, i, j)
    op = _potential_op(V, grid)
    y = None if math.isinf(y0) else y0
    if op is None:
        kx, ky, c = _mode_coefficients(f)
        ks = (kx, ky)
        sym = np.zeros(len(c), dtype=complex)
        for q in range(len(c)):
            mu = kx[q] ** 2 + ky[q] ** 2
            if mu == 0:
                continue
            if kind == "W":
                sym[q] = phi_extension(spec, mu, y0=y)
            elif kind == "T":
                sym[q] = t_symbol(spec, mu, y0=y) * 1j * ks[i][q]
            elif kind == "S":
                sym[q] = s_symbol(spec, mu, y0=y) * ks[i][q] * ks[j][q]
            else:
                raise DomainError(f"unknown estimator kind {kind!r}")
        return _bin_average(grid, kx, ky, c * sym, n_bins)

    lam = -op.eigenvalues
    lam[lam < 1e-10 * max(1.0, float(np.abs(lam).max()))] = 0.0
    coeff = op.coefficients(f)
    active = np.abs(coeff) > 1e-14 * max(1e-300, float(np.abs(coeff).max()))
    Q = op.eigenvectors
    if kind == "W":
        out = np.zeros_like(coeff)
        for jj in np.nonzero(active)[0]:
            if lam[jj] > 0:
                out[jj] = phi_extension(spec, float(lam[jj]), y0=y) * coeff[jj]
        field_vals = (Q @ out).reshape(grid.shape)
    else:
        if y is None:
            raise DomainError("operator-valued oracles with a potential need a finite y0")
        mu_act = lam[active]
        pos = mu_act[mu_act > 0]
        top = 40.0 * spec.decay_length(float(pos.min())) if pos.size else 2 * y0
        top = max(top, y0)
        nodes, weights = _y_quadrature(spec, y0, top)
        K, dK = _kernel_columns(spec, mu_act, nodes)
        green = np.asarray(spec.green(y0, nodes), float)
        a = np.asarray(spec.a(nodes), float)
        Qa = Q[:, active]
        c_act = coeff[active]
        acc = np.zeros(Q.shape[0], dtype=complex)
        for r in range(nodes.size):
            if weights[r] * green[r] == 0:
                continue
            u = (Qa @ (K[r] * c_act)).reshape(grid.shape)
            di = _spectral_derivative(grid, i, u)
            if kind == "T":
                proj = Qa.T @ di.ravel()
                acc += weights[r] * green[r] * a[r] * (Qa @ (dK[r] * proj))
            elif kind == "S":
                dji = _spectral_derivative(grid, j, di)
                proj = Qa.T @ dji.ravel()
                acc -= weights[r] * green[r] * (Qa @ (K[r] * proj))
            else:
                raise DomainError(f"unknown estimator kind {kind!r}")
        field_vals = acc.reshape(grid.shape)
    kx, ky, c = _mode_coefficients(TorusField(grid, field_vals))
    return _bin_average(grid, kx, ky, c, n_bins)


def compare_to_oracle(est: EnsembleResult, oracle: np.ndarray, z: float = 2.0) -> dict:
    """Fraction of bins within z standard errors and the relative 2-norm error."""
    diff = est.estimate.values - oracle
    se = est.std_error
    ok = np.abs(diff) <= z * se
    denom = float(np.linalg.norm(oracle))
    rel = float(np.linalg.norm(diff) / denom) if denom > 0 else float(np.linalg.norm(diff))
    zs = np.where(se > 0, np.abs(diff) / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.inf))
    return {"fraction_within": float(ok.mean()), "relative_l2_error": rel,
            "max_abs_z": float(zs.max()), "z_scores": zs}


def y0_bias(f: TorusField, spec: DiffusionSpec, cfg: MCConfig, kind: str = "W", V=None,
            i: int = 0, j: int = 0) -> dict:
    """Compare estimates at y0 and 2 y0 (same seed)."""
    r1 = getattr(gv_estimate_all(f, spec, cfg, V, i, j), kind)
    r2 = getattr(gv_estimate_all(f, spec, cfg.with_(y0=2 * cfg.y0), V, i, j), kind)
    diff = r2.estimate.values - r1.estimate.values
    pooled = np.sqrt(r1.std_error ** 2 + r2.std_error ** 2)
    return {"max_abs_change": float(np.max(np.abs(diff))),
            "max_se": float(np.max(pooled)),
            "rms_change_over_se": float(np.sqrt(np.mean((np.abs(diff) / np.where(pooled > 0, pooled, 1)) ** 2)))}


# ---------------------------------------------------------------------------
# vertical process alone
# ---------------------------------------------------------------------------

def _eta_run(spec, cfg, g: Optional[SampledFunction]):
    _require_admissible(spec)
    kind, p0, p1, ty, ta, tb = _spec_args(spec)
    n = int(cfg.n_paths)
    tau = np.zeros(n)
    occ = np.zeros(n)
    flag = np.zeros(n, dtype=np.bool_)
    if g is None:
        gg, gv, use = np.array([0.0, 1.0]), np.zeros(2), False
    else:
        gg, gv = (np.ascontiguousarray(a, dtype=float) for a in g.arrays())
        use = True

    def work(s, e):
        kern.eta_paths(s, e, np.uint64(cfg.seed), kind, p0, p1, ty, ta, tb, float(cfg.dt),
                       float(cfg.y0), float(cfg.y_fine), int(cfg.max_steps), gg, gv, use,
                       tau[s:e], occ[s:e], flag[s:e])

    _run(work, n, int(cfg.threads))
    return tau, occ, flag


def hitting_times(spec: DiffusionSpec, cfg: MCConfig):
    """Absorption times of eta from cfg.y0; returns (tau of completed paths, number flagged)."""
    tau, _, flag = _eta_run(spec, cfg, None)
    return tau[~flag], int(flag.sum())


def laplace_mc(spec: DiffusionSpec, lam: float, cfg: MCConfig):
    """Estimate of E[exp(-lam tau)] with its standard error.

    Paths still alive at ``max_steps`` contribute exp(-lam t) at their
    current time t, an upper bound on their true (tiny) contribution.
    """
    tau, _, _ = _eta_run(spec, cfg, None)
    v = np.exp(-lam * tau)
    return math.fsum(v) / v.size, float(np.std(v, ddof=1) / math.sqrt(v.size))


def occupation_mc(spec: DiffusionSpec, g: SampledFunction, y0: float, cfg: MCConfig):
    """Monte Carlo E^{y0}[int_0^tau g(eta_s) ds]; returns (mean, std_error, n_flagged)."""
    if not isinstance(g, SampledFunction):
        raise DomainError("g must be a SampledFunction")
    if np.any(np.asarray(g.values) < 0):
        raise DomainError("g must be nonnegative")
    cfg = cfg.with_(y0=y0)
    _, occ, flag = _eta_run(spec, cfg, g)
    v = occ[~flag]
    if v.size < 2:
        raise NumericError("too few completed paths for an occupation estimate", {"completed": int(v.size)})
    mean = math.fsum(v) / v.size
    se = math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1) / v.size)
    return mean, se, int(flag.sum())


def simulate_eta(spec: DiffusionSpec, cfg: MCConfig, path_index: int):
    """One recorded path of eta: (times, heights, tau, absorbed)."""
    _require_admissible(spec)
    kind, p0, p1, ty, ta, tb = _spec_args(spec)
    m = int(cfg.max_steps)
    ts = np.zeros(m + 1)
    es = np.zeros(m + 1)
    k, tau, absorbed = kern.eta_record(np.uint64(cfg.seed), int(path_index), kind, p0, p1, ty, ta, tb,
                                       float(cfg.dt), float(cfg.y0), float(cfg.y_fine), m, ts, es)
    return ts[:k].copy(), es[:k].copy(), float(tau), bool(absorbed)


def simulate_X(grid: TorusGrid, cfg: MCConfig, path_index: int, n_steps: int = 1000):
    """Unwrapped Brownian path on the torus (rows = times 0, dt, ..., n_steps dt)."""
    out = np.zeros((int(n_steps) + 1, grid.dim))
    kern.x_record(np.uint64(cfg.seed), int(path_index), grid.dim, float(cfg.dt), int(n_steps), out)
    return out


def wrap(x):
    return np.mod(x, 2 * math.pi)


# ---------------------------------------------------------------------------
# Feynman-Kac
# ---------------------------------------------------------------------------

def fk_estimate(V: TorusField, t: float, f: TorusField, cfg: MCConfig) -> EnsembleResult:
    """Monte Carlo of exp(t (Delta + V)) f at the bin left edges 2 pi b / n_bins."""
    t = float(t)
    if not t >= 0:
        raise DomainError("t must be >= 0")
    if V.grid != f.grid:
        raise DomainError("V and f must share a grid")
    if np.any(V.values.real > 0) or np.any(V.values.imag != 0):
        raise DomainError("V must be real and non-positive")
    grid = f.grid
    n_steps = max(1, int(math.ceil(t / cfg.dt - 1e-12)))
    if n_steps > cfg.max_steps:
        raise DomainError("t exceeds max_steps * dt")
    last = t - (n_steps - 1) * cfg.dt
    kx, ky, c = _mode_coefficients(f)
    vg = V.values.real.reshape(-1, 1) if grid.dim == 1 else V.values.real
    vg = np.ascontiguousarray(vg, dtype=float)
    n = int(cfg.n_paths)
    vals = np.zeros(n, dtype=complex)
    wts = np.zeros(n)

    def work(s, e):
        kern.fk_paths(s, e, np.uint64(cfg.seed), grid.dim, float(cfg.dt), n_steps, float(last),
                      vg, grid.n, np.ascontiguousarray(kx), np.ascontiguousarray(ky),
                      np.ascontiguousarray(c), int(cfg.n_bins), vals[s:e], wts[s:e])

    _run(work, n, int(cfg.threads))
    if np.any(wts <= 0) or np.any(wts > 1.0):
        raise NumericError("Feynman-Kac weights left (0, 1]", {"min": float(wts.min()), "max": float(wts.max())})
    bgrid = TorusGrid(grid.dim, int(cfg.n_bins))
    bins = np.arange(n) % bgrid.size
    mean, se, cnt = _bin_reduce(bins, vals, np.ones(n, dtype=bool), bgrid.size)
    return EnsembleResult(TorusField(bgrid, mean), se.reshape(bgrid.shape), cnt.reshape(bgrid.shape), 0)


def fk_left_edges(res: EnsembleResult) -> tuple:
    nb = res.bin_grid.n
    e = np.arange(nb) * 2 * math.pi / nb
    return tuple(np.meshgrid(*([e] * res.bin_grid.dim), indexing="ij"))


def fk_oracle(V: TorusField, t: float, f: TorusField, n_bins: int) -> np.ndarray:
    """heat_semigroup values at the left-edge points used by ``fk_estimate``."""
    grid = f.grid
    if grid.n % n_bins:
        raise DomainError("n_bins must divide the grid size")
    op = schrodinger_build(grid, V)
    full = heat_semigroup(op, t, f).values
    stride = grid.n // n_bins
    sl = tuple(slice(None, None, stride) for _ in range(grid.dim))
    return full[sl]
