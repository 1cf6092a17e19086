import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvlab.errors import DomainError
from gvlab.special_fn import QuadratureConfig, bessel_k, gamma, mcd2_pair, mcd2_rhs


@pytest.mark.parametrize("x, want", [(1.0, 1.0), (0.5, math.sqrt(math.pi)), (5.0, 24.0)])
def test_gamma_values(x, want):
    assert gamma(x) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_gamma_rejects(bad):
    with pytest.raises(DomainError):
        gamma(bad)


def test_bessel_half_order_closed_form():
    assert bessel_k(0.5, 1.0) == pytest.approx(math.sqrt(math.pi / 2) * math.exp(-1), rel=1e-10)


def test_bessel_large_x_asymptotic():
    # the two-term expansion is itself only good to ~1.2e-3 at x = 10; keep the third term
    x = 10.0
    approx = math.sqrt(math.pi / (2 * x)) * math.exp(-x) * (1 + 3 / (8 * x) - 15 / (128 * x * x))
    assert bessel_k(1.0, x) == pytest.approx(approx, rel=2e-4)


@pytest.mark.parametrize("s, x", [(0.3, 0.01), (0.75, 1.0), (1.0, 10.0), (2.5, 3.0), (0.0, 40.0)])
def test_bessel_against_scipy(s, x):
    special = pytest.importorskip("scipy.special")
    assert bessel_k(s, x) == pytest.approx(float(special.kv(s, x)), rel=1e-10)


@given(st.floats(-4.5, 4.5), st.floats(0.05, 30.0))
@settings(max_examples=40, deadline=None)
def test_bessel_order_symmetry(s, x):
    assert bessel_k(-s, x) == pytest.approx(bessel_k(s, x), rel=1e-10)


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9, 2.0])
def test_bessel_decreasing(s):
    xs = [0.05 * 1.3 ** k for k in range(25)]
    vals = [bessel_k(s, x) for x in xs]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("x", [0.0, -2.0])
def test_bessel_rejects_nonpositive(x):
    with pytest.raises(DomainError):
        bessel_k(0.3, x)


def test_mcd2_pi_over_four():
    lhs, rhs = mcd2_pair(2.0, 0.5)
    assert rhs == pytest.approx(math.pi / 4, rel=1e-14)
    assert lhs == pytest.approx(math.pi / 4, rel=1e-9)


@pytest.mark.parametrize("alpha, nu", [(3.0, 0.5), (2.5, 1.0), (1.2, 0.5), (4.0, 0.3)])
def test_mcd2_sides_agree(alpha, nu):
    lhs, rhs = mcd2_pair(alpha, nu)
    assert abs(lhs - rhs) / abs(rhs) <= 1e-6


@pytest.mark.parametrize("alpha, nu", [(1.0, 0.5), (0.5, 0.5), (1.0, 0.0), (1.0, -0.2)])
def test_mcd2_rejects_boundary_and_outside(alpha, nu):
    with pytest.raises(DomainError):
        mcd2_pair(alpha, nu)


def test_quadrature_config_validation():
    with pytest.raises(DomainError):
        QuadratureConfig(rel_tol=0.0)
    with pytest.raises(DomainError):
        QuadratureConfig(max_subdivisions=0)


def test_mcd2_rhs_positive():
    assert mcd2_rhs(3.0, 1.0) > 0
