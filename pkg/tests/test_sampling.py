import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from flowgen.errors import AssetError, ConfigError
from flowgen.sampling import (EXP_RETRY_CAP, CubedGaussian, Exponential, MotionConfig, SampleSeed,
                              UniformMagnitude, derive_rng, sample_background_motion,
                              sample_foreground_count, sample_foreground_motion, sample_placement,
                              sample_translation_magnitude, translation_dist_from_dict)


def truncexp_cdf(x, T=20.0, cap=150.0):
    return (1 - np.exp(-np.asarray(x) / T)) / (1 - math.exp(-cap / T))


def draws(dist, n, seed=0):
    rng = np.random.default_rng(seed)
    return np.array([sample_translation_magnitude(rng, dist) for _ in range(n)])


class TestMagnitudes:
    def test_truncated_exponential_ks(self):
        m = draws(Exponential(), 50_000)
        assert m.min() >= 0 and m.max() <= 150
        assert stats.kstest(m, truncexp_cdf).pvalue > 0.01

    def test_truncated_exponential_mean(self):
        analytic = 20 - 150 * math.exp(-7.5) / (1 - math.exp(-7.5))
        assert analytic == pytest.approx(19.917, abs=1e-3)
        m = draws(Exponential(), 50_000, seed=1)
        # standard error is about 0.09
        assert abs(m.mean() - analytic) < 0.4

    def test_uniform_ks(self):
        m = draws(UniformMagnitude(), 20_000)
        assert stats.kstest(m, stats.uniform(0, 150).cdf).pvalue > 0.01

    def test_cubed_gaussian_mass_below_clip(self):
        m = draws(CubedGaussian(), 100_000)
        assert m.max() == 150.0
        expected = 1 - 2 * stats.norm.sf(150 ** (1 / 3) / 2.3)
        assert expected == pytest.approx(0.979, abs=1e-3)
        frac = np.mean(m < 150)
        assert abs(frac - expected) < 5 * math.sqrt(expected * (1 - expected) / m.size)

    def test_cubed_gaussian_cdf_below_clip(self):
        m = draws(CubedGaussian(), 20_000, seed=2)
        inner = m[m < 150]
        # |g|^3 <= x  <=>  |g| <= x^(1/3); condition on being below the clip
        p_clip = 1 - 2 * stats.norm.sf(150 ** (1 / 3) / 2.3)

        def cdf(x):
            return (1 - 2 * stats.norm.sf(np.cbrt(x) / 2.3)) / p_clip
        assert stats.kstest(inner, cdf).pvalue > 0.01

    def test_retry_cap_counter(self):
        class Huge:  # every draw is rejected
            def exponential(self, scale):
                return 1e9

        c = Counter()
        assert sample_translation_magnitude(Huge(), Exponential(), c) == 150.0
        assert c["exp_retry_exhausted"] == 1
        assert EXP_RETRY_CAP == 64


class TestMotions:
    def test_background_ranges_and_zero_fraction(self):
        rng = np.random.default_rng(5)
        cfg = MotionConfig()
        n = 20_000
        ps = [sample_background_motion(rng, cfg, (712, 584)) for _ in range(n)]
        t = np.array([p.translation for p in ps])
        assert np.abs(t).max() <= 20
        zero = np.all(t == 0, axis=1).mean()
        assert abs(zero - 0.3) < 5 * math.sqrt(0.21 / n)
        assert max(abs(p.rotation) for p in ps) <= math.pi / 100
        assert all(0.85 <= p.scale <= 1.15 for p in ps)
        assert ps[0].pivot == (355.5, 291.5)

    def test_foreground_direction_uniform(self):
        rng = np.random.default_rng(6)
        ps = [sample_foreground_motion(rng, MotionConfig(), (10.0, 20.0)) for _ in range(20_000)]
        t = np.array([p.translation for p in ps])
        theta = np.mod(np.arctan2(t[:, 1], t[:, 0]), 2 * np.pi)
        assert stats.kstest(theta, stats.uniform(0, 2 * np.pi).cdf).pvalue > 0.01
        assert ps[0].pivot == (10.0, 20.0)

    def test_fg_zero_prob_extension(self):
        rng = np.random.default_rng(7)
        cfg = MotionConfig(fg_zero_prob=1.0)
        assert all(sample_foreground_motion(rng, cfg, (0, 0)).translation == (0.0, 0.0)
                   for _ in range(100))

    def test_foreground_count_chi2(self):
        # seed 8 lands at p=2e-4 even with numpy's vectorised integers(); 0-7 are all > 0.3
        rng = np.random.default_rng(0)
        counts = Counter(sample_foreground_count(rng, MotionConfig()) for _ in range(18_000))
        assert set(counts) == set(range(7, 16))
        obs = np.array([counts[k] for k in range(7, 16)])
        assert stats.chisquare(obs).pvalue > 0.01

    def test_placement_inset(self):
        rng = np.random.default_rng(9)
        pts = np.array([sample_placement(rng, (100, 50), (10, 10)) for _ in range(2000)])
        assert pts[:, 0].min() >= 10 and pts[:, 0].max() <= 90
        assert pts[:, 1].min() >= 5 and pts[:, 1].max() <= 45

    def test_placement_too_large(self):
        with pytest.raises(AssetError):
            sample_placement(np.random.default_rng(0), (100, 50), (101, 10))


class TestSeeds:
    def test_streams_reproducible_and_distinct(self):
        a = derive_rng(SampleSeed(42, 3)).random(8)
        b = derive_rng(SampleSeed(42, 3)).random(8)
        c = derive_rng(SampleSeed(42, 4)).random(8)
        d = derive_rng(SampleSeed(43, 3)).random(8)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c) and not np.array_equal(a, d)

    def test_u64_bounds(self):
        derive_rng(SampleSeed(2 ** 64 - 1, 0))
        with pytest.raises(ConfigError):
            SampleSeed(2 ** 64, 0)
        with pytest.raises(ConfigError):
            SampleSeed(-1, 0)
        with pytest.raises(ConfigError):
            SampleSeed(0, -1)


class TestConfig:
    def test_roundtrip(self):
        cfg = MotionConfig(fg_translation=CubedGaussian(sigma=3.0), fg_count_range=(2, 4))
        assert MotionConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("d,field", [
        ({"bogus": 1}, "motion.bogus"),
        ({"bg_zero_prob": 1.5}, "bg_zero_prob"),
        ({"scale_range": [1.2, 1.0]}, "scale_range"),
        ({"fg_count_range": [3, 2]}, "fg_count_range"),
        ({"fg_count_range": [1.5, 2]}, "fg_count_range"),
        ({"rotation_range": "x"}, "rotation_range"),
        ({"fg_translation": {"kind": "poisson"}}, "fg_translation.kind"),
        ({"fg_translation": {"kind": "exponential", "T": -1}}, "fg_translation.T"),
        ({"fg_translation": {"kind": "uniform", "T": 1}}, "fg_translation.T"),
    ])
    def test_rejects(self, d, field):
        with pytest.raises(ConfigError) as e:
            MotionConfig.from_dict(d)
        assert e.value.field == field

    def test_dist_parse(self):
        assert translation_dist_from_dict({"kind": "uniform", "max": 10}) == UniformMagnitude(10.0)
