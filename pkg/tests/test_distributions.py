import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from softfinger.distributions import (
    LogNormalShape,
    NormalShape,
    canonical_distributions,
    lognormal_cdf,
    lognormal_pdf,
    lognormal_ppf,
)
from softfinger.errors import ConfigError
from softfinger.rng import block_ranges, ordered_map, uniform_block, uniforms
from softfinger.sobol import to_unit_cube

JOINT1_CV = LogNormalShape(0.5232, -3.6635)
shapes = st.builds(LogNormalShape, st.floats(0.05, 3.5), st.floats(-5, 5))


class TestLogNormal:
    def test_density_at_median(self):
        x = np.exp(-3.6635)
        expected = 1 / (x * 0.5232 * np.sqrt(2 * np.pi))
        assert lognormal_pdf(x, JOINT1_CV) == pytest.approx(expected, rel=1e-14)
        assert lognormal_pdf(x, JOINT1_CV) == pytest.approx(29.73, abs=0.01)

    @given(shapes, st.floats(1e-6, 1e3))
    def test_matches_scipy(self, shape, x):
        ref = stats.lognorm(s=shape.sigma, scale=np.exp(shape.mu))
        assert lognormal_pdf(x, shape) == pytest.approx(ref.pdf(x), rel=1e-10, abs=1e-300)
        assert lognormal_cdf(x, shape) == pytest.approx(ref.cdf(x), rel=1e-10, abs=1e-300)

    def test_normalized(self):
        med = np.exp(JOINT1_CV.mu)
        total = sum(integrate.quad(lambda x: lognormal_pdf(x, JOINT1_CV), a, b, epsabs=1e-13, limit=200)[0]
                    for a, b in ((0, med), (med, 10 * med), (10 * med, np.inf)))
        assert abs(total - 1) < 1e-8

    def test_mode_is_local_maximum(self):
        mode = np.exp(JOINT1_CV.mu - JOINT1_CV.sigma ** 2)
        f = lambda x: lognormal_pdf(x, JOINT1_CV)  # noqa: E731
        assert f(mode) > f(mode * (1 + 1e-4)) and f(mode) > f(mode * (1 - 1e-4))

    def test_zero_outside_support(self):
        np.testing.assert_array_equal(lognormal_pdf(np.array([-1.0, 0.0]), JOINT1_CV), 0.0)

    @pytest.mark.parametrize("sigma", [0.0, -0.1, np.nan])
    def test_invalid_sigma(self, sigma):
        with pytest.raises(ConfigError):
            LogNormalShape(sigma, 0.0)

    def test_invalid_sd(self):
        with pytest.raises(ConfigError):
            NormalShape(0.0, 0.0)


class TestUnitCube:
    def test_medians(self):
        pairs = to_unit_cube(canonical_distributions()[0])
        assert pairs["c_v"][1](0.5) == pytest.approx(np.exp(-3.6635), rel=1e-14)
        assert pairs["q_ini"][1](0.5) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("joint", [0, 1, 2])
    def test_round_trip(self, joint):
        pairs = to_unit_cube(canonical_distributions()[joint])
        u = np.random.default_rng(1).uniform(1e-6, 1 - 1e-6, 10_000)
        for name, (cdf, ppf) in pairs.items():
            x = ppf(u)
            back = ppf(cdf(x))
            scale = np.abs(x) if name != "q_ini" else 0.07
            assert np.max(np.abs(back - x) / scale) < 1e-9

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5])
    def test_outside_open_interval(self, u):
        with pytest.raises(ConfigError):
            lognormal_ppf(u, JOINT1_CV)
        with pytest.raises(ConfigError):
            NormalShape(0.0, 1.0).ppf(u)


class TestCounterRng:
    def test_blocks_are_reproducible(self):
        np.testing.assert_array_equal(uniform_block(7, 1, 3, 100, 4), uniform_block(7, 1, 3, 100, 4))

    def test_streams_and_seeds_differ(self):
        a = uniform_block(7, 1, 0, 100, 1)
        assert not np.array_equal(a, uniform_block(7, 2, 0, 100, 1))
        assert not np.array_equal(a, uniform_block(8, 1, 0, 100, 1))
        assert not np.array_equal(a, uniform_block(7, 1, 1, 100, 1))

    def test_open_interval(self):
        u = uniforms(0, 0, 50_000, 2)
        assert u.min() > 0 and u.max() < 1

    def test_block_ranges_cover(self):
        ranges = block_ranges(20_000, 8192)
        assert ranges[0][1] == 0 and ranges[-1][2] == 20_000
        assert all(a[2] == b[1] for a, b in zip(ranges, ranges[1:]))

    def test_ordered_map_independent_of_workers(self):
        fn = lambda b: uniform_block(3, 0, b, 1000, 2).sum()  # noqa: E731
        assert ordered_map(fn, range(9), 1) == ordered_map(fn, range(9), 4)

    def test_large_seed(self):
        assert uniform_block(2 ** 64 - 1, 0, 0, 4, 1).shape == (4, 1)
