import math

import numpy as np
import pytest
from scipy import stats

from gvlab.errors import DomainError
from gvlab.montecarlo import (MCConfig, compare_to_oracle, fk_estimate, fk_oracle, gv_estimate_all,
                              gv_estimate_Sij, gv_estimate_Ti, gv_estimate_W, gv_oracle, hitting_times,
                              laplace_mc, occupation_mc, simulate_eta, simulate_X)
from gvlab.torus_spectral import TorusField, TorusGrid
from gvlab.vertical_diffusion import BMDrift, Bessel, SampledFunction, occupation_expectation

G = TorusGrid(1, 64)
X, = G.coords()
SIN = TorusField(G, np.sin(X))


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(y0=-1.0), dict(n_bins=12), dict(n_paths=0),
                                dict(dt=0.1, y0=1.0), dict(threads=0), dict(seed=-1)])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        MCConfig(**kw)


def test_mean_exit_time_with_drift():
    tau, flagged = hitting_times(BMDrift(1, 1), MCConfig(n_paths=20000, y0=1.0, seed=1))
    assert flagged == 0
    se = tau.std(ddof=1) / math.sqrt(tau.size)
    assert abs(tau.mean() - 0.5) <= 3 * se


def test_exit_time_brownian_scaling():
    # the mean is infinite without drift, so compare medians
    cfg = MCConfig(n_paths=8000, y0=1.0, dt=1e-3, seed=2)
    t1, _ = hitting_times(BMDrift(1, 0), cfg)
    t2, _ = hitting_times(BMDrift(1, 0), cfg.with_(y0=2.0, seed=3))
    assert np.median(t2) / np.median(t1) == pytest.approx(4.0, rel=0.1)


def test_laplace_transform_of_exit_time():
    mean, se = laplace_mc(BMDrift(1, 0), 1.0, MCConfig(n_paths=20000, y0=1.0, seed=4))
    assert abs(mean - math.exp(-1)) <= 3 * se


def test_eta_path_stays_positive():
    for spec in (BMDrift(1, 1), Bessel(0.3)):
        ts, es, tau, absorbed = simulate_eta(spec, MCConfig(y0=1.0, seed=5, max_steps=200000), 7)
        assert absorbed
        assert np.all(es[:-1] > 0) and np.all(np.diff(ts) > 0)
        assert ts[-1] == pytest.approx(tau)


def test_eta_paths_are_reproducible():
    cfg = MCConfig(y0=1.0, seed=6)
    a = simulate_eta(BMDrift(1, 1), cfg, 3)
    b = simulate_eta(BMDrift(1, 1), cfg, 3)
    assert np.array_equal(a[1], b[1]) and a[2] == b[2]


def test_torus_brownian_variance():
    cfg = MCConfig(dt=1e-3, seed=7)
    ends = np.array([simulate_X(G, cfg, k, 100)[-1, 0] - simulate_X(G, cfg, k, 100)[0, 0] for k in range(4000)])
    var = ends.var(ddof=1)
    se = var * math.sqrt(2.0 / (ends.size - 1))
    assert abs(var - 2 * 0.1) <= 3 * se
    step = np.diff(simulate_X(G, cfg, 0, 4000)[:, 0])
    assert step.std() == pytest.approx(math.sqrt(2e-3), rel=0.05)


def test_exit_position_uniform_and_zero_function():
    cfg = MCConfig(n_paths=8000, y0=1.0, seed=8, n_bins=16)
    run = gv_estimate_all(TorusField(G, np.zeros(64)), BMDrift(1, 1), cfg)
    counts = run.W.n_effective.ravel()
    assert counts.sum() == 8000
    assert stats.chisquare(counts).pvalue > 1e-3
    for r in (run.W, run.T, run.S):
        assert np.all(r.estimate.values == 0)


def test_axis_errors():
    cfg = MCConfig(n_paths=10)
    with pytest.raises(DomainError):
        gv_estimate_Ti(SIN, 1, BMDrift(1, 0), cfg)
    with pytest.raises(DomainError):
        gv_estimate_Sij(SIN, 0, 1, BMDrift(1, 0), cfg)


@pytest.mark.parametrize("spec,phi", [(BMDrift(1, 0), 0.25), (Bessel(0.75), 0.2)])
def test_w_estimate_matches_constant_symbol(spec, phi):
    cfg = MCConfig(n_paths=20000, y0=4.0, seed=9, n_bins=8)
    est = gv_estimate_W(SIN, spec, cfg)
    oracle = gv_oracle("W", SIN, spec, cfg.y0, cfg.n_bins)
    cmp = compare_to_oracle(est, oracle, 3.0)
    assert cmp["max_abs_z"] <= 4.0
    # the infinite-height value phi sin(x), averaged over bins, is close to the finite-height oracle
    centers = est.bin_centers()[0]
    sinc = math.sin(math.pi / 8) / (math.pi / 8)
    assert np.max(np.abs(oracle - phi * sinc * np.sin(centers))) < 0.02


def test_t_and_s_signs_on_single_mode():
    cfg = MCConfig(n_paths=20000, y0=4.0, seed=10, n_bins=8)
    run = gv_estimate_all(SIN, BMDrift(1, 0), cfg, i=0, j=0)
    c = run.T.bin_centers()[0]
    for kind, ref in (("T", -np.cos(c)), ("S", np.sin(c))):
        est = getattr(run, kind).estimate.values.real
        oracle = gv_oracle(kind, SIN, BMDrift(1, 0), cfg.y0, cfg.n_bins)
        assert np.max(compare_to_oracle(getattr(run, kind), oracle)["z_scores"]) <= 4.0
        # shape: a positive multiple of the reference wave
        assert np.dot(est, ref) > 0.8 * np.linalg.norm(est) * np.linalg.norm(ref)


def test_gv_thread_count_does_not_change_output():
    cfg = MCConfig(n_paths=3000, y0=2.0, seed=11, n_bins=8)
    a = gv_estimate_all(SIN, BMDrift(1, 1), cfg)
    b = gv_estimate_all(SIN, BMDrift(1, 1), cfg.with_(threads=3))
    for k in "WTS":
        assert np.array_equal(getattr(a, k).estimate.values, getattr(b, k).estimate.values)
        assert np.array_equal(getattr(a, k).std_error, getattr(b, k).std_error)


def test_fk_examples():
    cfg = MCConfig(n_paths=4000, seed=12, n_bins=16)
    one = fk_estimate(TorusField(G, np.zeros(64)), 0.5, TorusField(G, np.ones(64)), cfg)
    assert np.allclose(one.estimate.values, 1.0, atol=1e-12)
    c = 0.7
    free = fk_estimate(TorusField(G, np.zeros(64)), 0.5, SIN, cfg)
    shifted = fk_estimate(TorusField(G, -c * np.ones(64)), 0.5, SIN, cfg)
    assert np.allclose(shifted.estimate.values, math.exp(-c * 0.5) * free.estimate.values, rtol=1e-10, atol=1e-14)


def test_fk_against_eigensolver():
    V = TorusField(G, -(1 + np.cos(X)))
    cfg = MCConfig(n_paths=40000, seed=13, n_bins=32)
    res = fk_estimate(V, 0.5, SIN, cfg)
    oracle = fk_oracle(V, 0.5, SIN, cfg.n_bins)
    assert np.linalg.norm(res.estimate.values - oracle) / np.linalg.norm(oracle) < 0.05


def test_occupation_examples():
    expo = SampledFunction.from_callable(lambda z: np.exp(-z), np.linspace(0, 40, 4001))
    cfg = MCConfig(n_paths=20000, seed=14, dt=2e-3, y0=2.0)
    mean, se, _ = occupation_mc(BMDrift(1, 1), expo, 2.0, cfg)
    assert abs(mean - occupation_expectation(BMDrift(1, 1), expo, 2.0)) <= 3 * se
    zero = SampledFunction(np.linspace(0, 5, 6), np.zeros(6))
    assert occupation_mc(BMDrift(1, 1), zero, 1.0, cfg)[0] == 0.0
    box = SampledFunction(np.array([0.0, 1.0, 1.0 + 1e-12]), np.array([1.0, 1.0, 0.0]))
    mean, se, _ = occupation_mc(BMDrift(1, 0), box, 1.0, cfg.with_(seed=15))
    assert abs(mean - 0.5) <= 3 * se
    with pytest.raises(DomainError):
        occupation_mc(BMDrift(1, 0), SampledFunction(np.array([0.0, 1.0]), np.array([-1.0, 0.0])), 1.0, cfg)
