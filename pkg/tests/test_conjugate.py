import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entropic_tail.conjugate import (ScalarFunctionOnInterval, co_transform, is_nu_convex, legendre,
                                     norm_equivalence, nu_function, nu_star, orlicz_from_psi, sup_affine)
from entropic_tail.gls import INF, PsiFunction

FAMILY = {
    "const": PsiFunction.const(4.0),
    "sqrt_p": PsiFunction.sqrt_p(),
    "eighth": PsiFunction.closed(lambda p: np.power(4.0 - np.asarray(p, dtype=float), -0.125), 4.0,
                                 "(4-p)^-1/8"),
    "beta_b(0.5,3)": PsiFunction.beta_b(0.5, 3.0),
    "beta_b(1,4)": PsiFunction.beta_b(1.0, 4.0),
}
X = np.linspace(0.0, 3.0, 13)


def dense_p(psi):
    """Brute-force p-grid on the closure of [1, b)."""
    if math.isinf(psi.b):
        return np.unique(np.concatenate((np.linspace(1, 60, 1_000_001), 1 + np.geomspace(1e-9, 1e4, 100_001))))
    b = psi.b
    g = np.concatenate((np.linspace(1, b, 1_000_001), b - np.geomspace(1e-13, b - 1, 200_001)))
    if not np.isfinite(psi.raw(b)):
        g = g[g < b]
    return np.unique(g)


def brute_nu_star(psi, x):
    p = dense_p(psi)
    nu = p * np.log(psi.raw(p))
    return np.array([np.max(xx * p - nu) for xx in np.atleast_1d(x)])


def brute_co_transform(psi, x):
    y = 1.0 / dense_p(psi)
    v = np.log(psi.raw(1.0 / y))
    return np.array([np.min(xx * y + v) for xx in np.atleast_1d(x)])


@pytest.mark.parametrize("name", list(FAMILY))
def test_nu_star_matches_brute_force(name):
    psi = FAMILY[name]
    assert np.max(np.abs(nu_star(psi, X) - brute_nu_star(psi, X))) <= 1e-6


@pytest.mark.parametrize("name", list(FAMILY))
def test_co_transform_matches_brute_force(name):
    psi = FAMILY[name]
    assert np.max(np.abs(co_transform(psi, X) - brute_co_transform(psi, X))) <= 1e-6


@pytest.mark.parametrize("name", list(FAMILY))
def test_legendre_of_nu_matches_brute_force(name):
    psi = FAMILY[name]
    hi = psi.b if math.isfinite(psi.b) else 1e6
    got = legendre(nu_function(psi), X, 1.0, hi)
    assert np.max(np.abs(got - brute_nu_star(psi, X))) <= 1e-6


def test_closed_form_spot_values():
    assert nu_star(PsiFunction.sqrt_p(), 1.0) == pytest.approx(math.e / 2, abs=1e-8)
    c = PsiFunction.const(4.0)
    for x in (0.0, 0.3, 1.0, 2.5):
        assert co_transform(c, x) == pytest.approx(x / 4, abs=1e-8)
        assert nu_star(c, x) == pytest.approx(4 * x, abs=1e-8)
    x = math.log(2)
    assert co_transform(PsiFunction.sqrt_p(), x) == pytest.approx(0.5 + 0.5 * math.log(2 * x), abs=1e-8)
    assert 0.5 + 0.5 * math.log(2 * x) == pytest.approx(0.6633, abs=1e-4)


def test_nu_star_sqrt_p_closed_form():
    x = np.linspace(0.5, 3.0, 11)
    assert np.allclose(nu_star(PsiFunction.sqrt_p(), x), np.exp(2 * x - 1) / 2, rtol=1e-9)


def test_nu_star_below_subgradient_floor():
    # nu(1) = 0 and the sup sits at p = 1
    assert nu_star(PsiFunction.sqrt_p(), 0.2) == pytest.approx(0.2, abs=1e-12)


def test_legendre_examples():
    f = ScalarFunctionOnInterval(lambda y: 0.5 * y * y, -10, 10)
    assert legendre(f, 1.0) == pytest.approx(0.5, abs=1e-12)
    zero = ScalarFunctionOnInterval(lambda y: 0.0 * y, 1.0, 4.0)
    assert legendre(zero, 1.0) == pytest.approx(4.0, abs=1e-12)


def test_legendre_unbounded_is_inf():
    f = ScalarFunctionOnInterval(lambda y: np.sqrt(y), 0.0, INF)
    assert legendre(f, 1.0) == INF


def test_legendre_nonconvex_grid_global():
    # double well; global sup picks the right branch
    f = ScalarFunctionOnInterval(lambda y: (y * y - 1) ** 2, -2, 2)
    y = np.linspace(-2, 2, 2_000_001)
    for x in (-1.0, 0.3, 2.0):
        assert legendre(f, x) == pytest.approx(np.max(x * y - (y * y - 1) ** 2), abs=1e-9)


def test_co_transform_infimum_dominance():
    psi = FAMILY["beta_b(1,4)"]
    y = np.linspace(0.26, 1.0, 50)
    for x in (0.5, 1.0, 2.0):
        assert np.all(co_transform(psi, x) <= x * y + np.log(psi(1 / y)) + 1e-12)


@pytest.mark.parametrize("name", list(FAMILY))
def test_co_transform_concave_nondecreasing(name):
    psi = FAMILY[name]
    x = np.linspace(0, 5, 101)
    v = co_transform(psi, x)
    assert np.all(np.diff(v) >= -1e-9)
    assert np.all(v[2:] - 2 * v[1:-1] + v[:-2] <= 1e-7)


def test_conjugate_monotone_on_nonnegative_domain():
    f = ScalarFunctionOnInterval(lambda y: np.exp(y), 0.0, 5.0)
    x = np.linspace(-3, 3, 61)
    assert np.all(np.diff(legendre(f, x)) >= -1e-12)


def _random_convex_table(rng, n=40):
    y = np.linspace(0.0, 1.0, n)
    slopes = np.sort(rng.normal(0, 3, n - 1))
    vals = rng.normal() + np.concatenate(([0.0], np.cumsum(slopes * np.diff(y))))
    return y, vals, slopes


@pytest.mark.parametrize("seed", range(5))
def test_biconjugation(seed):
    rng = np.random.default_rng(seed)
    y, vals, slopes = _random_convex_table(rng)
    f = ScalarFunctionOnInterval.tabulated(y, vals)

    def fstar(s):
        return legendre(f, s)

    ff = legendre(fstar, y[1:-1], slopes[0] - 1.0, slopes[-1] + 1.0)
    rel = np.abs(ff - vals[1:-1]) / np.maximum(np.abs(vals[1:-1]), 1e-12)
    assert np.max(rel) <= 1e-4


def test_sup_affine_shapes():
    val, arg = sup_affine(lambda p: p * p, np.array([[0.0, 2.0], [4.0, 6.0]]), -10, 10)
    assert val.shape == (2, 2)
    assert np.allclose(val, np.array([[0, 1], [4, 9]]), atol=1e-12)
    assert np.allclose(arg, np.array([[0, 1], [2, 3]]), atol=1e-5)


def test_nu_convexity_check():
    assert is_nu_convex(PsiFunction.sqrt_p())
    assert is_nu_convex(PsiFunction.beta_b(0.5, 3.0))
    bumpy = PsiFunction.closed(lambda p: np.exp(np.sin(3 * np.asarray(p))), 4.0, "bumpy")
    assert not is_nu_convex(bumpy)
    with pytest.raises(ValueError):
        orlicz_from_psi(bumpy)


def test_orlicz_from_psi_stitching_and_growth():
    psi = PsiFunction.sqrt_p()
    N = orlicz_from_psi(psi)
    e = math.e
    assert N(e) == pytest.approx(math.exp(nu_star(psi, 1.0)), rel=1e-12)
    assert N(e * (1 - 1e-9)) == pytest.approx(N(e), rel=1e-6)
    u = np.array([10.0, 20.0])
    assert np.allclose(np.log(N(u)), u * u / (2 * e), rtol=1e-8)
    assert N(0.0) == 0.0
    c = orlicz_from_psi(PsiFunction.const(4.0))
    assert c(100.0) / c(50.0) == pytest.approx(16.0, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 4.0), st.floats(0.0, 4.0))
def test_nu_star_convex_in_x(x, h):
    psi = PsiFunction.beta_b(1.0, 4.0)
    a, m, b = nu_star(psi, np.array([x, x + h / 2, x + h]))
    assert m <= 0.5 * (a + b) + 1e-9


def test_norm_equivalence_reports_ratio():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(2000)
    out = norm_equivalence(x, PsiFunction.sqrt_p())
    assert out["gls"] > 0 and out["orlicz"] > 0
    assert out["ratio"] == pytest.approx(out["orlicz"] / out["gls"])
