import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracslow import DomainError, HurstIndex, SingularityError, TimeGrid
from fracslow.fbm import (
    MultiFbmPath,
    fbm_covariance,
    fbm_covariance_matrix,
    fbm_increments,
    fgn_autocovariance,
    fgn_batch,
    kernel_phi,
    sample_fbm,
    sample_mfbm,
)
from fracslow.rng import stream

hs = st.floats(min_value=0.51, max_value=0.99)
times = st.floats(min_value=0.0, max_value=50.0)


class TestHurstIndex:
    @pytest.mark.parametrize("value", [0.5, 1.0, 0.3, 1.2, float("nan")])
    def test_rejects_outside_open_interval(self, value):
        with pytest.raises(DomainError):
            HurstIndex(value)

    def test_brownian_limit_only_at_half(self):
        assert HurstIndex.brownian().value == 0.5
        with pytest.raises(DomainError):
            HurstIndex(0.7, brownian_limit=True)

    def test_float_conversion(self):
        assert float(HurstIndex(0.7)) == 0.7


class TestTimeGrid:
    def test_times_and_end(self):
        g = TimeGrid(0.0, 0.25, 4)
        np.testing.assert_array_equal(g.times, [0, 0.25, 0.5, 0.75, 1.0])
        assert g.t_end == 1.0

    @pytest.mark.parametrize("kw", [dict(t0=-1, dt=0.1, n=3), dict(t0=0, dt=0, n=3),
                                    dict(t0=0, dt=0.1, n=0), dict(t0=0, dt=0.1, n=2.5)])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            TimeGrid(**kw)


class TestCovariance:
    @pytest.mark.parametrize("t,s,h,expected", [
        (1.0, 1.0, 0.7, 1.0),
        (1.0, 0.5, 0.5, 0.5),
        (2.0, 2.0, 0.75, 2.0 ** 1.5),
        (0.0, 3.0, 0.6, 0.0),
    ])
    def test_values(self, t, s, h, expected):
        H = HurstIndex.brownian() if h == 0.5 else h
        assert fbm_covariance(t, s, H) == pytest.approx(expected, rel=1e-15)

    def test_negative_time_rejected(self):
        with pytest.raises(DomainError):
            fbm_covariance(-0.1, 1.0, 0.7)

    @given(t=times, s=times, h=hs)
    def test_symmetry_and_cauchy_schwarz(self, t, s, h):
        c = fbm_covariance(t, s, h)
        assert c == fbm_covariance(s, t, h)
        vt, vs = t ** (2 * h), s ** (2 * h)
        assert abs(c) <= math.sqrt(vt * vs) * (1 + 1e-12) + 1e-14

    @given(t=st.floats(0.01, 10), s=st.floats(0.01, 10), h=hs, c=st.floats(0.1, 10))
    def test_self_similarity(self, t, s, h, c):
        lhs = fbm_covariance(c * t, c * s, h)
        rhs = c ** (2 * h) * fbm_covariance(t, s, h)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)

    def test_matrix_positive_definite(self, hurst):
        t = np.linspace(0.05, 1.0, 20)
        eig = np.linalg.eigvalsh(fbm_covariance_matrix(t, hurst))
        assert eig.min() > 0


class TestKernel:
    def test_singular_at_zero(self):
        with pytest.raises(SingularityError):
            kernel_phi(0.0, 0.7)

    @pytest.mark.parametrize("h", [0.6, 0.75, 0.9])
    def test_value_and_symmetry(self, h):
        assert kernel_phi(2.0, h) == pytest.approx(h * (2 * h - 1) * 2.0 ** (2 * h - 2))
        assert kernel_phi(-2.0, h) == kernel_phi(2.0, h)

    def test_autocovariance_brownian_is_white(self):
        r = fgn_autocovariance(np.arange(6), HurstIndex.brownian())
        np.testing.assert_allclose(r, [1, 0, 0, 0, 0, 0], atol=1e-15)

    @given(h=hs)
    def test_autocovariance_sums_to_variance_growth(self, h):
        # Var(W_n) = n^{2H} = sum_{j,k < n} rho(j - k)
        n = 17
        r = fgn_autocovariance(np.arange(n), h)
        total = n * r[0] + 2 * sum((n - k) * r[k] for k in range(1, n))
        assert total == pytest.approx(n ** (2 * h), rel=1e-12)

    @given(h=hs)
    def test_autocovariance_positive_for_h_above_half(self, h):
        assert np.all(fgn_autocovariance(np.arange(1, 50), h) > 0)


class TestSampling:
    grid = TimeGrid(0.0, 1 / 64, 64)

    @pytest.mark.parametrize("method", ["cholesky", "circulant"])
    def test_reproducible(self, method):
        a = sample_fbm(self.grid, 0.7, 11, method)
        b = sample_fbm(self.grid, 0.7, 11, method)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.values[0] == 0.0
        assert not a.values.flags.writeable

    def test_seeds_differ(self):
        a = sample_fbm(self.grid, 0.7, 1)
        b = sample_fbm(self.grid, 0.7, 2)
        assert not np.array_equal(a.values, b.values)

    def test_mfbm_component_zero_matches_single_path(self):
        multi = sample_mfbm(3, self.grid, 0.7, 5)
        single = sample_fbm(self.grid, 0.7, 5)
        assert isinstance(multi, MultiFbmPath)
        assert multi.values.shape == (65, 3)
        np.testing.assert_array_equal(multi.components[0].values, single.values)
        comp2 = sample_fbm(self.grid, 0.7, 5, component=2)
        np.testing.assert_array_equal(multi.components[2].values, comp2.values)

    def test_nonzero_start_rejected(self):
        with pytest.raises(DomainError):
            sample_fbm(TimeGrid(1.0, 0.1, 3), 0.7, 0)

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            sample_fbm(self.grid, 0.7, 0, "hosking")

    @pytest.mark.parametrize("method", ["cholesky", "circulant"])
    def test_increment_batches_are_slices(self, method):
        full = fbm_increments(32, 0.01, 0.8, 99, 10, method=method)
        part = fbm_increments(32, 0.01, 0.8, 99, 4, method=method, start=3)
        np.testing.assert_array_equal(full[3:7], part)

    def test_fgn_rows_depend_on_own_generator(self):
        g = [stream(4, r, 0) for r in range(3)]
        both = fgn_batch(16, 0.7, g)
        alone = fgn_batch(16, 0.7, [stream(4, 1, 0)])
        np.testing.assert_array_equal(both[1], alone[0])

    @pytest.mark.parametrize("method", ["cholesky", "circulant"])
    def test_variance_at_end(self, method):
        # Var(W_1) = 1; 4000 replicas, SE of the sample variance ~ sqrt(2/4000)
        inc = fbm_increments(64, 1 / 64, 0.75, 1234, 4000, method=method)
        end = inc.sum(axis=1)
        assert abs(end.var() - 1.0) < 4 * math.sqrt(2 / 4000)

    def test_csv_columns(self):
        text = sample_fbm(TimeGrid(0.0, 0.5, 2), 0.7, 3).to_csv()
        lines = text.splitlines()
        assert lines[0] == "t,value"
        assert len(lines) == 4
        multi = sample_mfbm(2, TimeGrid(0.0, 0.5, 2), 0.7, 3).to_csv().splitlines()
        assert multi[0] == "t,value,component"
