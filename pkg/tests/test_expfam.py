import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from opinionpool import DiagonalGaussian, ExpFamilyMember, cross_terms, expfam_affinity, expfam_cross_moments, log_partition
from opinionpool.expfam import expfam_log_affinity

rates = st.floats(0.05, 50.0, allow_nan=False)


def exp_quad_affinity(a, b):
    return quad(lambda z: math.sqrt(a * b) * math.exp(-0.5 * (a + b) * z), 0, math.inf, epsabs=1e-13, epsrel=1e-12)[0]


class TestMember:
    def test_exponential_domain(self):
        with pytest.raises(ValueError):
            ExpFamilyMember("exponential", [0.5])
        with pytest.raises(ValueError):
            ExpFamilyMember.exponential([0.0])

    def test_gaussian_domain(self):
        with pytest.raises(ValueError):
            ExpFamilyMember("gaussian-diagonal", [0.0, 0.5])
        with pytest.raises(ValueError):
            ExpFamilyMember("gaussian-diagonal", [0.0, -0.5, 1.0])

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="known"):
            ExpFamilyMember("poisson", [1.0])

    def test_support(self):
        assert ExpFamilyMember.exponential([2.0]).support_descriptor == "nonnegative"
        assert ExpFamilyMember.from_gaussian(DiagonalGaussian([0.0], [1.0])).support_descriptor == "real"


class TestLogPartition:
    def test_exponential_unit(self):
        assert log_partition(ExpFamilyMember("exponential", [-1.0])) == 0.0

    def test_exponential_e(self):
        assert log_partition(ExpFamilyMember("exponential", [-math.e])) == pytest.approx(-1.0, abs=1e-15)

    def test_standard_normal(self):
        m = ExpFamilyMember("gaussian-diagonal", [0.0, -0.5])
        # independent numeric check: log of int exp(eta^T T(z)) dz
        integral = quad(lambda z: math.exp(-0.5 * z * z), -math.inf, math.inf)[0]
        assert log_partition(m) == pytest.approx(math.log(integral), abs=1e-12)
        assert log_partition(m) == pytest.approx(0.9189385332046723, abs=1e-14)

    def test_shifted_normal_numeric(self):
        g = DiagonalGaussian([1.5], [0.4])
        m = ExpFamilyMember.from_gaussian(g)
        e1, e2 = m.natural_params
        integral = quad(lambda z: math.exp(e1 * z + e2 * z * z), -math.inf, math.inf)[0]
        assert log_partition(m) == pytest.approx(math.log(integral), abs=1e-10)


class TestAffinity:
    def test_exponential_identical(self):
        assert expfam_affinity(ExpFamilyMember.exponential([3.0]), ExpFamilyMember.exponential([3.0])) == 1.0

    def test_exponential_worked_example(self):
        s = expfam_affinity(ExpFamilyMember.exponential([1.0]), ExpFamilyMember.exponential([4.0]))
        assert abs(s - 0.8) < 1e-12
        assert abs(s - exp_quad_affinity(1.0, 4.0)) < 1e-6

    def test_exponential_quadrature(self, rng):
        for a, b in rng.uniform(0.2, 10.0, (200, 2)):
            s = expfam_affinity(ExpFamilyMember.exponential([a]), ExpFamilyMember.exponential([b]))
            assert abs(s - exp_quad_affinity(a, b)) < 1e-6
            assert s == pytest.approx(2 * math.sqrt(a * b) / (a + b), abs=1e-12)

    @given(rates, rates)
    def test_exponential_symmetry_bounds(self, a, b):
        ea, eb = ExpFamilyMember.exponential([a]), ExpFamilyMember.exponential([b])
        assert expfam_log_affinity(ea, eb) == expfam_log_affinity(eb, ea)
        assert 0.0 < expfam_affinity(ea, eb) <= 1.0

    def test_gaussian_consistency(self, rng):
        m1, m2 = rng.uniform(-5, 5, (2, 1000))
        v1, v2 = rng.uniform(0.1, 3.0, (2, 1000))
        for args in zip(m1, v1, m2, v2):
            a, b = DiagonalGaussian([args[0]], [args[1]]), DiagonalGaussian([args[2]], [args[3]])
            ct = cross_terms(a, b)
            ea, eb = ExpFamilyMember.from_gaussian(a), ExpFamilyMember.from_gaussian(b)
            assert abs(expfam_affinity(ea, eb) - ct.affinity) < 1e-10
            mom, sec = expfam_cross_moments(ea, eb)
            assert abs(mom[0] - ct.mu_ij[0] * ct.affinity) < 1e-10
            assert abs(sec[0, 0] - (ct.mu_ij[0] ** 2 + ct.var_ij[0]) * ct.affinity) < 1e-10

    def test_gaussian_multidim_consistency(self, rng):
        for _ in range(50):
            d = int(rng.integers(2, 5))
            a = DiagonalGaussian(rng.normal(size=d), rng.uniform(0.1, 3, d))
            b = DiagonalGaussian(rng.normal(size=d), rng.uniform(0.1, 3, d))
            s = expfam_affinity(ExpFamilyMember.from_gaussian(a), ExpFamilyMember.from_gaussian(b))
            assert s == pytest.approx(cross_terms(a, b).affinity, abs=1e-10)

    def test_mixed_families(self):
        with pytest.raises(ValueError, match="different families"):
            expfam_affinity(ExpFamilyMember.exponential([1.0]), ExpFamilyMember("gaussian-diagonal", [0.0, -0.5]))


class TestCrossMoments:
    def test_identical_exponential(self):
        m, v = expfam_cross_moments(ExpFamilyMember.exponential([2.0]), ExpFamilyMember.exponential([2.0]))
        np.testing.assert_allclose(m, [0.5], rtol=1e-15)
        np.testing.assert_allclose(v, [[0.5]], rtol=1e-15)

    def test_worked_example(self):
        m, v = expfam_cross_moments(ExpFamilyMember.exponential([1.0]), ExpFamilyMember.exponential([4.0]))
        # numerical integration of z^k sqrt(q_1 q_4) on [0, inf): 0.32 and 0.256
        mq = quad(lambda z: z * 2.0 * math.exp(-2.5 * z), 0, math.inf)[0]
        vq = quad(lambda z: z * z * 2.0 * math.exp(-2.5 * z), 0, math.inf)[0]
        assert m[0] == pytest.approx(0.32, abs=1e-12) and m[0] == pytest.approx(mq, abs=1e-9)
        assert v[0, 0] == pytest.approx(0.256, abs=1e-12) and v[0, 0] == pytest.approx(vq, abs=1e-9)

    def test_mixed_families(self):
        with pytest.raises(ValueError):
            expfam_cross_moments(ExpFamilyMember.exponential([1.0]), ExpFamilyMember("gaussian-diagonal", [0.0, -0.5]))
