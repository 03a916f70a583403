import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracslow import quadrature as qd


def unit_weight(owner, x):
    return np.ones_like(x)


class TestRules:
    @pytest.mark.parametrize("q", [4, 8, 12])
    def test_legendre_polynomials(self, q):
        x, w = qd.gauss_legendre01(q)
        for k in range(2 * q):
            assert np.sum(w * x**k) == pytest.approx(1 / (k + 1), rel=1e-13)

    @given(power=st.floats(-0.95, -0.05), k=st.integers(0, 10))
    def test_jacobi_moments(self, power, k):
        x, w = qd.gauss_jacobi01(12, power)
        assert np.sum(w * x**k) == pytest.approx(1 / (k + power + 1), rel=1e-12)
        xr, wr = qd.gauss_jacobi01(12, power, at_right=True)
        # int_0^1 s^k (1-s)^p ds = B(k+1, p+1)
        beta = math.gamma(k + 1) * math.gamma(power + 1) / math.gamma(k + power + 2)
        assert np.sum(wr * xr**k) == pytest.approx(beta, rel=1e-12)


class TestGrading:
    def test_offsets_pattern(self):
        off = qd.graded_offsets(20.0, 1.0)
        np.testing.assert_allclose(off[:5], [0, 1, 3, 7, 11])
        assert off[-1] == 20.0
        assert np.all(np.diff(off) <= 4.0 + 1e-12)

    @given(length=st.floats(0.01, 100), width=st.floats(0.01, 2))
    def test_offsets_cover_interval(self, length, width):
        off = qd.graded_offsets(length, width)
        assert off[0] == 0.0 and off[-1] == length
        assert np.all(np.diff(off) > 0)

    def test_atoms_truncate_and_sort(self):
        atoms = qd.build_atoms([0.0, 5.0, 6.0], unit_weight, 0.5, 3.0)
        assert atoms.lo[0] == pytest.approx(2.0)
        assert np.all(np.diff(atoms.lo) > 0)
        assert set(atoms.owner.tolist()) == {0, 1}
        assert atoms.width.sum() == pytest.approx(4.0)


class TestGram:
    @pytest.mark.parametrize("beta", [-0.8, -0.6, -0.2])
    def test_unit_square(self, beta):
        # int_0^1 int_0^1 |x - y|^beta = 2 / ((beta + 1)(beta + 2))
        atoms = qd.build_atoms([0.0, 1.0], unit_weight, 0.1, 10.0)
        got = qd.owner_gram(atoms, beta, 1)[0, 0]
        assert got == pytest.approx(2 / ((beta + 1) * (beta + 2)), rel=1e-13)

    @pytest.mark.parametrize("beta", [-0.7, -0.3])
    def test_adjacent_intervals(self, beta):
        # int_0^1 int_1^2 (y - x)^beta = (2^{b+2} - 2) / ((b+1)(b+2))
        atoms = qd.build_atoms([0.0, 1.0, 2.0], unit_weight, 0.25, 10.0)
        g = qd.owner_gram(atoms, beta, 2)
        exact = (2 ** (beta + 2) - 2) / ((beta + 1) * (beta + 2))
        assert g[0, 1] == pytest.approx(exact, rel=1e-12)
        assert g[0, 1] == g[1, 0]

    @pytest.mark.parametrize("h", [0.6, 0.7, 0.9])
    def test_exponential_weight_reproduces_gamma_factor(self, h):
        # H(2H-1) int int e^{-(T-x)} e^{-(T-y)} |x-y|^{2H-2} -> H Gamma(2H) as T -> inf
        T = 60.0

        def w(owner, x):
            return np.exp(-(T - x))

        atoms = qd.build_atoms([0.0, T], w, 0.5, 45.0)
        got = h * (2 * h - 1) * qd.owner_gram(atoms, 2 * h - 2, 1)[0, 0]
        assert got == pytest.approx(h * math.gamma(2 * h), rel=1e-12)

    def test_gram_symmetric_positive(self):
        atoms = qd.build_atoms([0.0, 0.7, 1.5, 3.0], unit_weight, 0.2, 10.0)
        g = qd.gram(atoms, -0.6)
        np.testing.assert_allclose(g, g.T, rtol=1e-13)
        assert np.linalg.eigvalsh(g).min() > 0

    def test_brownian_diagonal(self):
        def w(owner, x):
            return np.exp(-(2.0 - x))

        atoms = qd.build_atoms([0.0, 2.0], w, 0.25, 45.0)
        got = qd.owner_diag(atoms, 1)[0, 0]
        assert got == pytest.approx((1 - math.exp(-4)) / 2, rel=1e-14)
