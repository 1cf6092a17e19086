import json
import math

import numpy as np
import pytest

from gvlab.errors import DomainError
from gvlab.multiplier import AT_INFINITY, closed_form_symbol, constants
from gvlab.norm_probe import (EXAMPLE_ALPHA_R1, ProbeOperator, SuiteConfig, bound_catalog,
                              dense_l2_norm, probe, reports_to_json, verify_bound_suite)
from gvlab.torus_spectral import (TorusField, TorusGrid, beurling_ahlfors, lp_norm, phi_operator,
                                  riesz_symbol, second_riesz_symbol)
from gvlab.vertical_diffusion import BMDrift

G1 = TorusGrid(1, 32)
G2 = TorusGrid(2, 16)


def catalog_entry(name, **kw):
    return bound_catalog(SuiteConfig(select=(name,), **kw))[0]


def test_lp_norm_examples():
    one = TorusField(G1, np.ones(32))
    for p in (1.0, 1.5, 2.0, 4.0):
        assert lp_norm(one, p) == pytest.approx((2 * math.pi) ** (1 / p))
    f = TorusField(G2, np.random.default_rng(0).normal(size=G2.shape))
    assert lp_norm(f * (-3 + 4j), 3.0) == pytest.approx(5 * lp_norm(f, 3.0))
    parseval = math.sqrt(2 * math.pi) ** 2 * math.sqrt(np.sum(np.abs(f.values) ** 2) / f.values.size)
    assert lp_norm(f, 2.0) == pytest.approx(parseval)
    with pytest.raises(DomainError):
        lp_norm(f, 0.5)


def test_riesz_nearly_attains_unit_norm_at_two():
    op = ProbeOperator.from_symbol(riesz_symbol(0), G1, lambda p: constants(p).choi_cot, "cot")
    rep = probe(op, 2.0, trials=8, seed=1)
    assert 0.98 <= rep.best_ratio <= 1.0 + 1e-9
    assert rep.passed()


def test_constant_symbol_gives_exact_ratio():
    sym = closed_form_symbol("phi", BMDrift(1, 0))
    op = ProbeOperator.from_symbol(phi_operator(sym), G1, lambda p: 0.5 * constants(p).burkholder, "W")
    for p in (1.5, 3.0, 8.0):
        rep = probe(op, p, trials=4, seed=2)
        assert rep.best_ratio == pytest.approx(0.25, rel=1e-12)
        assert rep.best_ratio <= rep.bound


@pytest.mark.parametrize("make,grid", [(lambda: riesz_symbol(0, 1.0), G1),
                                       (lambda: second_riesz_symbol(0, 1, 0.0), G2),
                                       (beurling_ahlfors, G2)])
def test_probe_is_a_lower_bound_of_exact_two_norm(make, grid):
    op = ProbeOperator.from_symbol(make(), grid, lambda p: 10.0, "loose")
    exact = dense_l2_norm(op)
    rep = probe(op, 2.0, trials=6, seed=3)
    assert rep.best_ratio <= exact * (1 + 1e-9)
    assert rep.best_ratio >= 0.95 * exact
    ratio = lp_norm(TorusField(grid, op.apply(rep.witness.values)), 2.0) / lp_norm(rep.witness, 2.0)
    assert ratio == pytest.approx(rep.best_ratio, rel=1e-10)


def test_exact_two_norm_matches_symbol_sup_on_band():
    op = ProbeOperator.from_symbol(second_riesz_symbol(0, 1, 1.0), G2, lambda p: 1.0, "x")
    m = np.abs(second_riesz_symbol(0, 1, 1.0).multiplier(G2))
    k1, k2 = G2.frequencies()
    band = (k1 ** 2 + k2 ** 2 <= (16 / 4) ** 2)
    assert dense_l2_norm(op) == pytest.approx(float(m[band].max()), rel=1e-10)


def test_probe_is_deterministic():
    op = catalog_entry("beurling_ahlfors", n2=16)
    a = probe(op, 4.0, trials=6, seed=7)
    b = probe(op, 4.0, trials=6, seed=7, threads=3)
    assert a.best_ratio == b.best_ratio
    assert np.array_equal(a.witness.values, b.witness.values)


def test_beurling_ahlfors_at_four():
    rep = probe(catalog_entry("beurling_ahlfors", n2=16), 4.0, trials=8, seed=0)
    assert rep.bound == pytest.approx(6.0)
    assert rep.passed()


def test_catalog_bounds():
    r1 = catalog_entry("stieltjesR1", n1=32)
    assert r1.bound(3.0) == pytest.approx(2 * math.sqrt(3))
    assert catalog_entry("bessel_riesz(s=0.5)", n1=32).bound(3.0) == pytest.approx(math.sqrt(3))
    assert catalog_entry("R1^2-R2^2", n2=16).bound(4.0) == 3.0
    with pytest.raises(DomainError):
        bound_catalog(SuiteConfig(select=("nope",)))


def test_second_order_difference_example():
    # the difference of the two theta = inf operators is twice R1^2 - R2^2
    a = second_riesz_symbol(0, 0, AT_INFINITY).multiplier(G2)
    b = second_riesz_symbol(1, 1, AT_INFINITY).multiplier(G2)
    cat = catalog_entry("R1^2-R2^2", n2=16)
    f = np.random.default_rng(4).normal(size=G2.shape)
    c = np.fft.fftn(f, norm="ortho")
    doubled = np.fft.ifftn((a - b) * c, norm="ortho")
    assert np.allclose(doubled, -2 * cat.apply(f), atol=1e-12)
    rep = probe(cat, 4.0, trials=8, seed=5)
    assert rep.passed()


def test_suite_config_and_json():
    cfg = SuiteConfig(p_list=(2.0, 2.0, 1.5), trials=2, n1=16, n2=8,
                      select=("W[BMDrift(sigma=1.0, m=0.0)]", "beurling_ahlfors"))
    assert cfg.p_list == (1.5, 2.0)
    reports = verify_bound_suite(cfg)
    assert len(reports) == 4 and all(r.passed() for r in reports)
    rows = json.loads(reports_to_json(reports))
    assert {r["operator"] for r in rows} == set(cfg.select)
    with pytest.raises(DomainError):
        SuiteConfig(p_list=(1.0,))
    with pytest.raises(DomainError):
        SuiteConfig(n1=128)
