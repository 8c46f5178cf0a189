import math

import numpy as np
import pytest
from scipy import integrate

from entropic_tail.bounds import (TailBoundCurve, entropy_integral, field_tail_bound, modulus_bound,
                                  sup_tail_bound, tail_from_scale)
from entropic_tail.conjugate import co_transform
from entropic_tail.counterexample import build_model
from entropic_tail.fields import ConstantField, ScaledField, gaussian_circle
from entropic_tail.gls import INF, PsiFunction, natural_psi
from entropic_tail.metric import FiniteIndexSpace, entropy_profile, harmonic_space, natural_distance

CONST4 = PsiFunction.const(4.0)


def two_points(d=1.0):
    return FiniteIndexSpace(("a", "b"), np.array([[0.0, d], [d, 0.0]]))


def test_theta_zero_cases():
    assert entropy_integral(harmonic_space(5), CONST4, 0.0) == 0.0
    one = FiniteIndexSpace(("a",), np.zeros((1, 1)))
    assert entropy_integral(one, CONST4, 1.0) == 0.0
    with pytest.raises(ValueError):
        entropy_integral(one, CONST4, -1.0)


@pytest.mark.parametrize("d", [0.5, 1.0, 2.0])
def test_theta_two_points(d):
    # N = 2 below d, v*(x) = x/4, so the integrand is 2^(1/2)
    assert entropy_integral(two_points(d), CONST4, d) == pytest.approx(9 * math.sqrt(2) * d, rel=1e-12)
    assert entropy_integral(two_points(d), CONST4, 10 * d) == pytest.approx(9 * math.sqrt(2) * d, rel=1e-12)


def test_step_sum_matches_quadrature():
    model = build_model(1.0, 8)
    fld = model.field()
    psi = natural_psi(fld)
    sp = natural_distance(fld, psi)
    prof = entropy_profile(sp)

    def integrand(eps):
        return 9.0 * math.exp(co_transform(psi, math.log(2.0) + math.log(prof.count(eps))))

    D = prof.diameter
    for delta in (0.5 * prof.levels[1], prof.levels[3], 0.7 * D, D):
        pts = [x for x in prof.levels if 0 < x < delta]
        ref = integrate.quad(integrand, 0.0, delta, points=pts or None, limit=200, epsabs=0, epsrel=1e-12)[0]
        assert entropy_integral(sp, psi, delta) == pytest.approx(ref, rel=1e-9)


def test_const_psi_tail_is_power():
    res = sup_tail_bound(two_points(1.0), CONST4, np.array([20.0, 40.0, 100.0]))
    Z = 9 * math.sqrt(2)
    assert res.Z == pytest.approx(Z)
    assert np.allclose(res.curve.values, (Z / res.curve.u) ** 4, rtol=1e-9)


def test_sqrt_p_tail_is_gaussian():
    Z = 2.0
    u = np.array([4.0, 8.0, 20.0])  # ln(u/Z) >= 1/2
    got = tail_from_scale(PsiFunction.sqrt_p(), Z, u)
    assert np.allclose(got, np.exp(-(u / Z) ** 2 / (2 * math.e)), rtol=1e-8)


def test_tail_from_scale_edge_cases():
    u = np.array([-1.0, 0.0, 1.0])
    assert np.array_equal(tail_from_scale(CONST4, INF, u), np.ones(3))
    assert np.array_equal(tail_from_scale(CONST4, 0.0, u), np.array([1.0, 1.0, 0.0]))
    assert tail_from_scale(CONST4, 1.0, np.array([0.5]))[0] == 1.0


def test_field_outside_gls_space_gives_trivial_bound():
    class NoMoments(ConstantField):
        def moment(self, t, p):
            return np.full(np.broadcast_shapes(np.shape(t), np.shape(p)), INF)

    res = field_tail_bound(NoMoments([1.0, 2.0]), np.array([1.0, 10.0]), psi=CONST4)
    assert not res.finite
    assert np.array_equal(res.curve.values, np.ones(2))
    assert res.curve.diagnostics


def test_zero_field_bound():
    res = field_tail_bound(ConstantField([0.0, 0.0]), np.array([0.5, 1.0]), psi=CONST4)
    assert np.array_equal(res.curve.values, np.zeros(2))


def test_constant_field_bound_dominates_truth():
    # sup |xi| = 3 surely: the bound must equal 1 for u < 3
    fld = ConstantField([1.0, -3.0, 2.0], b=4.0)
    u = np.linspace(0.5, 2.99, 20)
    res = field_tail_bound(fld, u, psi=CONST4)
    assert np.all(res.curve.values == 1.0)


def test_modulus_monotone():
    fld = gaussian_circle(16)
    psi = natural_psi(fld)
    sp = natural_distance(fld, psi)
    d = np.geomspace(1e-4, 3, 40)
    m = modulus_bound(sp, psi, d)
    assert np.all(np.diff(m) >= 0)
    assert modulus_bound(sp, psi, 0.0) == 0.0


def test_refinement_can_lower_internal_covering_number():
    # {1, 1/2, 0} needs 3 centres at eps = 0.4; adding 1/3 and 1/4 gives the better centre 1/3
    small, big = harmonic_space(2), harmonic_space(4)
    assert entropy_profile(small).count(0.4) == 3
    assert entropy_profile(big).count(0.4) == 2


@pytest.mark.parametrize("N,M", [(2, 4), (4, 8), (8, 32), (16, 64)])
def test_refinement_monotone_up_to_factor_two(N, M):
    # a subset A of B satisfies N_A(2 eps) <= N_B(eps), hence Theta_A(delta) <= 2 Theta_B(delta / 2)
    psi = PsiFunction.beta_b(1.0, 4.0)
    a, b = harmonic_space(N), harmonic_space(M)
    pa, pb = entropy_profile(a), entropy_profile(b)
    eps = np.unique(np.concatenate((pb.levels, pa.levels / 2, np.geomspace(1e-3, 1, 50))))
    assert np.all(pa.count(2 * eps) <= pb.count(eps))
    for delta in (0.05, 0.3, 1.0):
        assert entropy_integral(a, psi, delta) <= 2 * entropy_integral(b, psi, delta / 2) * (1 + 1e-12)


def test_tail_curve_validation_and_monotone():
    c = TailBoundCurve(np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.7, 2.0]), "empirical")
    assert np.array_equal(c.values, np.array([0.5, 0.5, 0.5]))
    with pytest.raises(ValueError):
        TailBoundCurve(np.array([2.0, 1.0]), np.array([0.1, 0.1]), "empirical")
    with pytest.raises(ValueError):
        TailBoundCurve(np.array([1.0, 2.0]), np.array([0.1]), "empirical")


def test_gaussian_circle_bound_is_nontrivial():
    res = field_tail_bound(gaussian_circle(32), np.geomspace(1, 200, 30))
    assert res.finite and res.Z >= 1
    assert res.curve.values[-1] < 1e-6


def test_theta_scales_with_field_scale():
    # with the natural psi, d and H are scale free but exp(v*) carries the scale of psi
    base = gaussian_circle(12)
    u = np.geomspace(0.01, 100, 10)
    ref = field_tail_bound(base, u)
    for c in (1e-3, 0.5, 20.0):
        res = field_tail_bound(ScaledField(base, c), u)
        assert res.diameter == pytest.approx(ref.diameter, rel=1e-12)
        assert res.theta == pytest.approx(c * ref.theta, rel=1e-9)
    small = field_tail_bound(ScaledField(base, 1e-3), u)
    assert small.Z == 1.0
    assert any("unverified" in d for d in small.curve.diagnostics)
    assert not any("unverified" in d for d in field_tail_bound(ScaledField(base, 20.0), u).curve.diagnostics)
