import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import ndtr

from fbm_orthant.constants import (
    ConstantsError,
    MissingPickandsError,
    assemble_asymptotics,
    c_K,
    case_ii_pickands_T,
    case_ii_prefactor,
    exponent,
    mvn_cdf,
    negative_part_sum,
)
from fbm_orthant.critical import Case, find_t0, stationary_point
from fbm_orthant.model import ModelSpec
from fbm_orthant.pickands import region_integral_2d


def _k_empty_closed_form(model, cp):
    I = list(cp.I)
    det = np.linalg.det(model.Sigma[np.ix_(I, I)])
    return math.sqrt(4 * math.pi / (cp.g_dd * (2 * math.pi * cp.t0 ** (2 * model.H)) ** len(I) * det))


def _trivariate_oracle(cov, upper):
    """Integrate the conditional normal CDF of the last coordinate over the first two."""
    L = np.linalg.cholesky(cov)

    def inner(z2, z1):
        x1 = L[0, 0] * z1
        x2 = L[1, 0] * z1 + L[1, 1] * z2
        if x1 >= upper[0] or x2 >= upper[1]:
            return 0.0
        m3 = L[2, 0] * z1 + L[2, 1] * z2
        dens = math.exp(-0.5 * (z1 * z1 + z2 * z2)) / (2 * math.pi)
        return dens * ndtr((upper[2] - m3) / L[2, 2])

    def z2_max(z1):
        return (upper[1] - L[1, 0] * z1) / L[1, 1]

    val, _ = integrate.dblquad(inner, -9, upper[0] / L[0, 0], -9, z2_max, epsabs=1e-11, epsrel=1e-10)
    return val


class TestMvnCdf:
    @given(st.floats(-6, 6), st.floats(0.1, 4))
    def test_univariate(self, x, s):
        p, _ = mvn_cdf([[s * s]], [x])
        assert abs(p - ndtr(x / s)) <= 1e-12

    def test_bivariate_orthant(self):
        p, _ = mvn_cdf([[1, 0.5], [0.5, 1]], [0, 0])
        assert abs(p - 1 / 3) <= 1e-8

    @given(st.floats(-0.99, 0.99))
    def test_bivariate_orthant_arcsine(self, rho):
        p, _ = mvn_cdf([[1, rho], [rho, 1]], [0, 0])
        assert p == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-9)

    def test_bivariate_independent(self):
        p, _ = mvn_cdf(np.diag([1.0, 4.0]), [0.3, -1.0])
        assert p == pytest.approx(ndtr(0.3) * ndtr(-0.5), abs=1e-12)

    def test_trivariate_against_quadrature(self):
        cov = np.array([[1.0, 0.3, -0.2], [0.3, 1.5, 0.4], [-0.2, 0.4, 0.8]])
        upper = np.array([0.4, -0.3, 0.9])
        p, err = mvn_cdf(cov, upper)
        assert abs(p - _trivariate_oracle(cov, upper)) <= 1e-5
        assert err < 1e-5

    def test_infinite_limits(self):
        assert mvn_cdf(np.eye(3), [np.inf, np.inf, np.inf])[0] == 1.0
        assert mvn_cdf(np.eye(3), [0.0, -np.inf, 1.0])[0] == 0.0
        assert mvn_cdf(np.eye(2), [0.0, np.inf])[0] == pytest.approx(0.5, abs=1e-15)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ConstantsError):
            mvn_cdf(np.eye(2), [0.0, 0.0, 0.0])

    def test_seed_reproducible(self):
        cov = np.eye(4) + 0.3
        assert mvn_cdf(cov, np.zeros(4), seed=5) == mvn_cdf(cov, np.zeros(4), seed=5)


class TestCk:
    def test_k_empty_closed_form(self):
        m = ModelSpec(H=0.3, Sigma=[[1.0, 0.2], [0.2, 2.0]], mu=[1.0, 0.7], nu=[1.0, 1.3])
        cp = find_t0(m)
        assert cp.K == ()
        assert c_K(m, cp).value == pytest.approx(_k_empty_closed_form(m, cp), rel=1e-14)

    def test_truncation_approaches_full(self, scalar_model):
        cp = find_t0(scalar_model)
        full = c_K(scalar_model, cp).value
        vals = [c_K(scalar_model, cp, M=M).value for M in (0.1, 0.5, 1.0, 5.0)]
        assert all(a < b for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(full, rel=1e-12)

    def test_single_weakly_essential_is_half(self, four_dim_scenario):
        # a one-dimensional normal CDF of a linear function of y integrates to 1/2
        cp = find_t0(four_dim_scenario)
        val = c_K(four_dim_scenario, cp)
        assert val.branch == "K-nonempty"
        assert val.value == pytest.approx(0.5 * _k_empty_closed_form(four_dim_scenario, cp), rel=1e-12)

    def test_pinned_value(self, four_dim_scenario):
        cp = find_t0(four_dim_scenario)
        assert c_K(four_dim_scenario, cp).value == pytest.approx(0.08467104683070843, abs=1e-10)

    def test_two_weakly_essential_arcsine(self):
        H = 0.75
        t0 = stationary_point(ModelSpec(H=H, Sigma=np.eye(2), mu=[1.0, 0.5], nu=[1.0, 2.0]), (0, 1))
        m = ModelSpec(H=H, Sigma=np.eye(4), mu=[1.0, 0.5, -1.0, -2.0], nu=[1.0, 2.0, t0, 2 * t0])
        cp = find_t0(m)
        assert cp.K == (2, 3)
        a = cp.g_dd / 4
        var = 1 / (2 * a)
        al, be = -1.0 / t0**H, -2.0 / t0**H
        rho = al * be * var / math.sqrt((1 + al * al * var) * (1 + be * be * var))
        expected = _k_empty_closed_form(m, cp) * (0.25 + math.asin(rho) / (2 * math.pi))
        assert c_K(m, cp).value == pytest.approx(expected, rel=1e-9)


class TestExponents:
    @pytest.mark.parametrize("n", range(1, 7))
    def test_both_meet_at_half(self, n):
        h = Fraction(1, 2)
        assert exponent(Case.I, n, h) == Fraction(1 - n, 2)
        assert exponent(Case.II, n, h) == Fraction(1 - n, 2)

    def test_worked_values(self):
        assert exponent(Case.I, 1, 0.25) == pytest.approx(1.5)
        assert exponent(Case.II, 2, 0.75) == pytest.approx(-0.25)


class TestSecondRegime:
    @pytest.fixture
    def pair(self):
        m = ModelSpec(H=0.75, Sigma=np.eye(2), mu=[1.0, 0.5], nu=[1.0, 2.0])
        return m, find_t0(m)

    def test_prefactor_is_slope_of_short_interval_constant(self, pair):
        m, cp = pair
        slope = (case_ii_pickands_T(m, cp, 1e6) - case_ii_pickands_T(m, cp, 0.0)) / 1e6
        assert slope == pytest.approx(case_ii_prefactor(m, cp), rel=1e-12)

    def test_closed_form_against_staircase(self, pair):
        # along the linear drift of the frozen-time field the weight c'y is constant,
        # so the exact region integral is affine in T
        m, cp = pair
        I = list(cp.I)
        t2h = cp.t0 ** (2 * m.H)
        a = m.mu[I] - m.H / cp.t0 * cp.b[I]
        c = cp.w[I] / t2h
        for T in (0.1, 1.0, 10.0):
            t = np.linspace(0, T, 100_001)
            Y = (a[None, :] * t[:, None])[None]
            assert region_integral_2d(Y, c)[0] == pytest.approx(case_ii_pickands_T(m, cp, T), rel=1e-5)

    def test_weighted_drift_is_orthogonal(self, pair):
        m, cp = pair
        I = list(cp.I)
        terms = cp.w[I] * (m.mu[I] - m.H / cp.t0 * cp.b[I])
        assert abs(terms.sum()) <= 1e-12 * np.abs(terms).sum()
        assert negative_part_sum(m, cp) > 0

    def test_assemble(self, pair):
        m, cp = pair
        res = assemble_asymptotics(m, cp)
        assert res.case is Case.II
        assert res.gamma == pytest.approx(-0.25)
        assert res.rate == pytest.approx(cp.g_value / 2)
        assert res.C == pytest.approx(case_ii_prefactor(m, cp) * c_K(m, cp).value)
        u = np.array([5.0, 10.0])
        assert np.allclose(np.log(res.evaluate(u)), res.log_evaluate(u))


class TestFirstRegime:
    def test_requires_pickands(self, scalar_model):
        with pytest.raises(MissingPickandsError):
            assemble_asymptotics(scalar_model, find_t0(scalar_model))

    def test_accepts_float(self, scalar_model):
        cp = find_t0(scalar_model)
        res = assemble_asymptotics(scalar_model, cp, pickands=2.0)
        assert res.C == pytest.approx(2.0 * c_K(scalar_model, cp).value)
        assert res.gamma == pytest.approx(1.5)

    def test_reports_interval(self, scalar_model):
        class Est:
            value, stderr = 2.0, 0.1

        res = assemble_asymptotics(scalar_model, find_t0(scalar_model), pickands=Est())
        lo, hi = res.components["pickands_ci95"]
        assert lo < 2.0 < hi


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_second_regime_prefactor_positive(seed):
    rng = np.random.default_rng(seed)
    H = rng.uniform(0.55, 0.95)
    mu = rng.uniform(0.2, 2, 2)
    nu = rng.uniform(0.2, 2, 2)
    m = ModelSpec(H=H, Sigma=np.eye(2), mu=mu, nu=nu)
    cp = find_t0(m)
    if cp.case is Case.II:
        assert negative_part_sum(m, cp) > 0
