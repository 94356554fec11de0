"""Quantile functions, t CDF and the seeded generator.

Reference values were computed with mpmath at 40 significant digits
(``sqrt(2) * erfinv(2p - 1)`` for the normal, the regularized incomplete beta
with a numerical quadrature cross-check for the t CDF, ``findroot`` for t
quantiles).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lstm_htqf.numerics import (
    DomainError,
    Prng,
    sample_student_t,
    std_normal_quantile,
    student_t_cdf,
    student_t_pdf,
    student_t_quantile,
)

NORMAL_REF = [
    (0.975, 1.9599639845400538556),
    (0.01, -2.3263478740408410931),
    (1e-10, -6.3613409024040561991),
    (0.5, 0.0),
]

T_CDF_REF = [
    (-2.5, 3.0, 0.043853323504032773625),
    (1.3, 4.5, 0.87190195602798297184),
    (-30.0, 6.1328, 3.4507083618554040735e-8),
    (0.2, 30.0, 0.57858492147033767653),
    (-4.0, 2.0001, 0.028593115795264278131),
]

T_QUANTILE_REF = [
    (0.01, 3.0, -4.5407028585681335202),
    (0.05, 5.5, -1.9752797040389108654),
    (0.99, 4.0, 3.7469473879791958136),
    (0.001, 3.0, -10.214531852407386477),
    (0.3, 7.2, -0.54840184475372894253),
]


class TestNormalQuantile:
    @pytest.mark.parametrize("p, expected", NORMAL_REF)
    def test_reference_values(self, p, expected):
        assert std_normal_quantile(p) == pytest.approx(expected, rel=1e-14, abs=1e-15)

    def test_symmetry(self):
        # dyadic levels so that 1 - p is exact
        p = np.arange(1, 2 ** 19 + 1, 97) / 2.0 ** 20
        np.testing.assert_allclose(std_normal_quantile(p), -std_normal_quantile(1 - p),
                                   rtol=0, atol=1e-12)

    def test_scalar_and_array_agree(self):
        p = np.array([1e-8, 0.02, 0.3, 0.7, 0.98])
        arr = std_normal_quantile(p)
        assert [std_normal_quantile(float(x)) for x in p] == pytest.approx(list(arr), rel=1e-15)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            std_normal_quantile(p)

    @given(st.floats(min_value=1e-12, max_value=1 - 1e-12))
    def test_inverts_erfc(self, p):
        z = std_normal_quantile(p)
        assert 0.5 * math.erfc(-z / math.sqrt(2)) == pytest.approx(p, rel=1e-12, abs=1e-16)


class TestStudentT:
    @pytest.mark.parametrize("x, nu, expected", T_CDF_REF)
    def test_cdf_reference(self, x, nu, expected):
        assert student_t_cdf(x, nu) == pytest.approx(expected, rel=1e-12)

    def test_cdf_vectorized_matches_scalar(self):
        x = np.array([v[0] for v in T_CDF_REF])
        nu = np.array([v[1] for v in T_CDF_REF])
        np.testing.assert_allclose(student_t_cdf(x, nu), [v[2] for v in T_CDF_REF], rtol=1e-12)

    @pytest.mark.parametrize("tau, nu, expected", T_QUANTILE_REF)
    def test_quantile_reference(self, tau, nu, expected):
        assert student_t_quantile(tau, nu) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("p", [0.6, 0.9, 0.99, 0.01])
    def test_closed_forms(self, p):
        # nu = 1 is Cauchy; nu = 2 has an algebraic inverse
        cauchy = math.tan(math.pi * (p - 0.5))
        assert student_t_quantile(p, 1.0) == pytest.approx(cauchy, rel=1e-11)
        exact2 = (2 * p - 1) / math.sqrt(2 * p * (1 - p))
        assert student_t_quantile(p, 2.0) == pytest.approx(exact2, rel=1e-12)

    def test_frozen_nu2(self):
        assert student_t_quantile(0.9, 2.0) == pytest.approx(1.8856180831641256, rel=1e-14)

    def test_large_nu_approaches_normal(self):
        assert student_t_quantile(0.975, 1e7) == pytest.approx(std_normal_quantile(0.975),
                                                               rel=1e-6)

    def test_pdf_integrates_to_cdf(self):
        x = np.linspace(-40, 1.5, 400001)
        f = student_t_pdf(x, 3.5)
        integral = np.sum((f[1:] + f[:-1]) * np.diff(x)) / 2.0
        assert integral == pytest.approx(student_t_cdf(1.5, 3.5), abs=2e-4)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=1e-6, max_value=1 - 1e-6), st.floats(min_value=2.01, max_value=60))
    def test_round_trip(self, tau, nu):
        q = student_t_quantile(tau, nu)
        assert student_t_cdf(q, nu) == pytest.approx(tau, rel=1e-10, abs=1e-14)

    @pytest.mark.parametrize("tau, nu", [(0.0, 3.0), (1.0, 3.0), (0.5, 0.0), (0.5, -1.0)])
    def test_domain(self, tau, nu):
        with pytest.raises(DomainError):
            student_t_quantile(tau, nu)


# SFC64 in pure Python: the independent reference for the raw stream.
_MASK = (1 << 64) - 1


def _sfc64_reference(state, count):
    a, b, c, w = state
    out = []
    for _ in range(count):
        tmp = (a + b + w) & _MASK
        w = (w + 1) & _MASK
        a = b ^ (b >> 11)
        b = (c + (c << 3)) & _MASK
        c = (((c << 24) | (c >> 40)) & _MASK) + tmp & _MASK
        out.append(tmp)
    return out


class TestPrng:
    GOLDEN_U64 = [10490465040999277362, 4331856608414834465, 7312684695965765022,
                  1874867651408945186, 7329937082660668956]

    def test_golden_stream(self):
        g = Prng(0)
        assert [g.next_u64() for _ in range(5)] == self.GOLDEN_U64

    def test_golden_floats(self):
        g = Prng(0)
        expected = [(x >> 11) * 2.0 ** -53 for x in self.GOLDEN_U64]
        assert [g.random() for _ in range(5)] == expected
        assert expected[:3] == [0.5686892493917326, 0.23483041728695253, 0.39642143170337907]

    @pytest.mark.parametrize("seed", [0, 1, 12345, 2 ** 64 - 1])
    def test_matches_reference_algorithm(self, seed):
        g = Prng(seed)
        state = g.state
        assert len(state) == 4
        assert list(g.next_u64(20)) == _sfc64_reference(state, 20)

    def test_array_and_scalar_streams_agree(self):
        a, b = Prng(7), Prng(7)
        np.testing.assert_array_equal(a.random(10), [b.random() for _ in range(10)])
        np.testing.assert_array_equal(a.random_open(10), [b.random_open() for _ in range(10)])

    def test_open_interval(self):
        u = Prng(3).random_open(100000)
        assert u.min() > 0.0 and u.max() < 1.0

    def test_permutation(self):
        p = Prng(5).permutation(1000)
        np.testing.assert_array_equal(np.sort(p), np.arange(1000))
        np.testing.assert_array_equal(p, Prng(5).permutation(1000))

    def test_spawn_streams_differ(self):
        kids = Prng(0).spawn(3)
        draws = [k.next_u64() for k in kids]
        assert len(set(draws)) == 3
        assert [k.next_u64() for k in Prng(0).spawn(3)] == draws

    @pytest.mark.parametrize("seed", [-1, 2 ** 64])
    def test_seed_range(self, seed):
        with pytest.raises(ValueError):
            Prng(seed)


class TestSampleStudentT:
    def test_moments(self):
        nu = 6.0
        x = sample_student_t(Prng(11), nu, 200000)
        assert abs(x.mean()) < 0.02
        assert x.var() == pytest.approx(nu / (nu - 2), rel=0.05)

    def test_scalar_matches_inverse_transform(self):
        g = Prng(2)
        u = Prng(2).random_open()
        assert sample_student_t(g, 4.0) == pytest.approx(student_t_quantile(u, 4.0), rel=1e-15)
