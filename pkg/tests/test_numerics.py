import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsnr import DomainError, NumericalFailure
from nsnr.model import UserCountLaw
from nsnr.numerics import (
    alternating_binomial_direct,
    alternating_binomial_sum,
    direct_limit,
    integrate_semi_infinite,
    mixed_alternating_sum,
    rho,
    rho_quadrature,
    sum_until_tail,
)

# (integrand, lower limit, exact value)
REFERENCE_INTEGRALS = [
    (lambda x: math.exp(-x), 0.0, 1.0),
    (lambda x: 1.0 / (1.0 + x * x), 0.0, math.pi / 2),
    (lambda x: math.exp(-x * x), 0.0, math.sqrt(math.pi) / 2),
    (lambda x: x * math.exp(-x), 0.0, 1.0),
    (lambda x: 1.0 / (1.0 + x) ** 2, 0.0, 1.0),
    (lambda x: 1.0 / x**2, 1.0, 1.0),
    (lambda x: math.exp(-2.0 * x) * math.cos(x), 0.0, 2.0 / 5.0),
    (lambda x: 1.0 / (1.0 + x**2) ** 2, 0.0, math.pi / 4),
    (lambda x: x**2 * math.exp(-x), 0.0, 2.0),
    (lambda x: 1.0 / (1.0 + x**4), 0.0, math.pi / (2 * math.sqrt(2))),
]


@pytest.mark.parametrize("case", range(len(REFERENCE_INTEGRALS)))
def test_integrate_semi_infinite_references(case):
    f, lower, exact = REFERENCE_INTEGRALS[case]
    res = integrate_semi_infinite(f, lower, rel_tol=1e-8)
    assert res.value == pytest.approx(exact, rel=1e-8)
    assert res.evaluations > 0


def test_integrate_semi_infinite_reports_failure():
    with pytest.raises(NumericalFailure) as info:
        integrate_semi_infinite(lambda x: 1.0 / math.sqrt(x), 1.0, rel_tol=1e-10, limit=50)
    assert info.value.partial is not None


class TestRho:
    @pytest.mark.parametrize("s", np.logspace(-3, 3, 25))
    def test_closed_form_vs_quadrature(self, s):
        assert abs(rho(float(s), 4.0) - rho_quadrature(float(s), 4.0)) <= 1e-8

    def test_known_value(self):
        assert rho(1.0, 4.0) == pytest.approx(math.pi / 4, rel=1e-15)

    @pytest.mark.parametrize("alpha", [2.5, 3.0, 3.7, 5.0])
    @pytest.mark.parametrize("s", [0.01, 1.0, 30.0])
    def test_generic_alpha_against_mpmath(self, alpha, s):
        # the slowly decaying tail is folded onto [0, 1] first (w^p = 1/(s u^a))
        a = mp.mpf(alpha) / 2
        p = a / (a - 1)
        knee = min(mp.mpf(1), mp.mpf(s) ** (-1 / p))
        with mp.workdps(30):
            expected = s / (a - 1) * mp.quad(lambda w: 1 / (1 + s * w**p), [0, knee, 1])
        assert rho(s, alpha) == pytest.approx(float(expected), rel=1e-10)

    @pytest.mark.parametrize("alpha", [2.5, 3.0, 4.0, 5.0, 7.0])
    @pytest.mark.parametrize("s", [complex(0.5, 0.3), complex(0.7, 2.3), complex(30, -5), complex(4e16, 1e17)])
    def test_complex_argument_matches_definition(self, alpha, s):
        a = mp.mpf(alpha) / 2
        p = a / (a - 1)
        with mp.workdps(30):
            big = mp.mpc(s)
            knee = abs(big) ** (-1 / p)
            pts = [0, knee / 10, knee, 10 * knee, 1] if knee < 1 else [0, 1]
            expected = complex(big / (a - 1) * mp.quad(lambda w: 1 / (1 + big * w**p), pts))
        assert abs(rho(s, alpha) - expected) <= 1e-12 * abs(expected)

    def test_complex_agrees_with_real_on_axis(self):
        assert rho(complex(2.0, 0.0), 3.0).real == pytest.approx(rho(2.0, 3.0), rel=1e-10)

    def test_monotone_in_s(self):
        for alpha in (3.0, 4.0, 5.0):
            values = [rho(float(s), alpha) for s in np.logspace(-2, 2, 15)]
            assert all(b >= a for a, b in zip(values, values[1:]))

    def test_nonincreasing_in_alpha_for_large_s(self):
        for s in (1.5, 10.0, 100.0):
            values = [rho(s, a) for a in (2.5, 3.0, 4.0, 5.0, 6.0)]
            assert all(b <= a for a, b in zip(values, values[1:]))

    def test_zero_and_errors(self):
        assert rho(0.0, 3.0) == 0.0
        with pytest.raises(DomainError):
            rho(1.0, 2.0)
        with pytest.raises(DomainError):
            rho(-1.0, 4.0)


class TestSumUntilTail:
    def test_geometric(self):
        res = sum_until_tail(lambda n: 0.5**n, lambda n: 0.5**n, 1e-9)
        assert res.value == pytest.approx(2.0, abs=1e-9)
        assert res.neglected_bound <= 1e-9

    def test_user_count_weights(self):
        law = UserCountLaw(10.0)
        res = sum_until_tail(lambda n: law.pmf(n), law.tail, 1e-10)
        assert res.value == pytest.approx(1.0, abs=1e-10)

    def test_single_nonzero_term(self):
        res = sum_until_tail(lambda n: 0.3 if n == 0 else 0.0, lambda n: 0.0, 1e-12)
        assert res.value == 0.3 and res.terms == 1

    def test_cap_exceeded(self):
        with pytest.raises(NumericalFailure) as info:
            sum_until_tail(lambda n: 1.0 / (n + 1) ** 2, lambda n: 1.0 / (n + 1), 1e-9, max_terms=100)
        assert info.value.partial.terms == 100

    def test_bad_tolerance(self):
        with pytest.raises(DomainError):
            sum_until_tail(lambda n: 0.0, lambda n: 0.0, 0.0)


def _mp_alternating(f, m):
    return mp.fsum(mp.binomial(m, k) * (-1) ** (k + 1) * f(k) for k in range(1, m + 1))


class TestAlternatingSums:
    def test_direct_against_binomial_theorem(self):
        # sum_k C(m,k)(-1)^(k+1) y^k = 1 - (1 - y)^m
        y, m = 0.3, 12
        value, err = alternating_binomial_direct([y**k for k in range(1, m + 1)], m)
        assert value == pytest.approx(1 - (1 - y) ** m, abs=1e-14)
        assert err < 1e-12

    @pytest.mark.parametrize("m", [5, 30, 80, 200])
    def test_rice_integral_against_mpmath(self, m):
        f_real = lambda k: 1.0 / (1.0 + k)
        f_cplx = lambda z: 1.0 / (1.0 + z)
        value, _ = alternating_binomial_sum(f_real, m, f_cplx, direct_max=2)
        mp.mp.dps = 40 + m
        try:
            expected = _mp_alternating(lambda k: mp.mpf(1) / (1 + k), m)
        finally:
            mp.mp.dps = 15
        # closed form: m / (m + 1)
        assert float(expected) == pytest.approx(m / (m + 1), rel=1e-14)
        assert value == pytest.approx(float(expected), abs=1e-11)

    def test_direct_and_rice_agree(self):
        f_real = lambda k: math.exp(-0.2 * k)
        f_cplx = lambda z: np.exp(-0.2 * z)
        direct, _ = alternating_binomial_sum(f_real, 15, direct_max=20)
        rice, _ = alternating_binomial_sum(f_real, 15, f_cplx, direct_max=1)
        assert rice == pytest.approx(direct, abs=1e-12)

    def test_missing_continuation_refuses(self):
        with pytest.raises(NumericalFailure):
            alternating_binomial_sum(lambda k: 1.0, 50, None, direct_max=20)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40), st.floats(0.05, 3.0))
    def test_mixture_is_linear(self, weights, a):
        f_real = lambda k: 1.0 / (1.0 + a * k)
        f_cplx = lambda z: 1.0 / (1.0 + a * z)
        value, _ = mixed_alternating_sum(weights, f_real, f_cplx, direct_max=10)
        expected = math.fsum(
            w * alternating_binomial_sum(f_real, m, f_cplx, direct_max=10)[0] for m, w in enumerate(weights, 1)
        )
        assert value == pytest.approx(expected, abs=1e-9)

    def test_direct_limit(self):
        assert direct_limit(1e-16) == 19
        assert direct_limit(1e-17) == 20
        assert direct_limit(1e-12) == 6
        assert direct_limit(0.0) == 20

    def test_negative_weights_rejected(self):
        with pytest.raises(DomainError):
            mixed_alternating_sum([0.5, -0.1], lambda k: 1.0, lambda z: 1.0)
