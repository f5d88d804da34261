import itertools
import math

import numpy as np
import pytest
from scipy import stats as sps

from splitfdr import (
    ConfigError,
    DataError,
    DataMatrix,
    LatentLabels,
    NumericError,
    TestConfig,
    test_all_features as feature_stats,
)
from splitfdr.stats import (
    FLAG_DEGENERATE,
    pois_glm_wald,
    welch_t,
    wilcoxon_signed,
    z_stat_known_var,
)

from conftest import gen


def _disc(values):
    return LatentLabels(kind="discrete2", values=np.asarray(values, dtype=np.int8))


def _cont(values):
    return LatentLabels(kind="continuous", values=np.asarray(values, dtype=float))


class TestZStat:
    def test_hand_value(self):
        z = z_stat_known_var(np.array([1.0, 1.0, 0.0, 0.0]), _disc([1, 1, 2, 2]), 1.0)
        assert z == pytest.approx(1.0, abs=1e-15)

    def test_equal_means_give_zero(self):
        z = z_stat_known_var(np.array([2.0, 3.0, 2.0, 3.0]), _disc([1, 1, 2, 2]), 1.0)
        assert z == 0.0

    def test_null_distribution_is_standard_normal(self):
        n, p = 60, 10_000
        g = gen(42)
        X = g.standard_normal((n, p))
        labels = _disc(np.repeat([1, 2], n // 2))
        d = feature_stats(DataMatrix(X), labels, TestConfig(kind="z_known_var", known_sigma=1.0))
        assert sps.kstest(d.stats, "norm").pvalue > 0.01

    def test_sigma_must_be_positive(self):
        with pytest.raises(ConfigError):
            z_stat_known_var(np.zeros(4), _disc([1, 1, 2, 2]), 0.0)


class TestWelch:
    def test_identical_groups_zero(self):
        assert welch_t(np.array([0.0, 2.0, 0.0, 2.0]), _disc([1, 1, 2, 2])) == 0.0

    def test_hand_value(self):
        t = welch_t(np.array([10.0, 12.0, 0.0, 2.0]), _disc([1, 1, 2, 2]))
        assert t == pytest.approx(10.0 / math.sqrt(2.0), rel=1e-12)

    def test_zero_variance_unequal_means_errors(self):
        with pytest.raises(NumericError, match="zero pooled variance"):
            welch_t(np.array([1.0, 1.0, 0.0, 0.0]), _disc([1, 1, 2, 2]))

    def test_small_cluster_rejected(self):
        with pytest.raises(DataError):
            welch_t(np.array([1.0, 2.0, 3.0, 4.0]), _disc([1, 2, 2, 2]))

    def test_null_calibration_against_welch_df_reference(self):
        n, p = 60, 10_000
        g = gen(43)
        X = g.standard_normal((n, p)) * np.exp(g.uniform(-0.5, 0.5, size=p))
        labels = np.repeat([1, 2], n // 2)
        d = feature_stats(DataMatrix(X), _disc(labels), TestConfig(kind="welch_t"))
        g1, g2 = labels == 1, labels == 2
        v1 = X[g1].var(axis=0, ddof=1) / g1.sum()
        v2 = X[g2].var(axis=0, ddof=1) / g2.sum()
        df = (v1 + v2) ** 2 / (v1**2 / (g1.sum() - 1) + v2**2 / (g2.sum() - 1))
        u = sps.t.cdf(d.stats, df)
        assert sps.kstest(u, "uniform").pvalue > 0.01


class TestWilcoxon:
    def test_identical_groups_zero(self):
        assert wilcoxon_signed(np.array([1.0, 2.0, 1.0, 2.0]), _disc([1, 1, 2, 2])) == 0.0

    def test_enumeration_oracle(self):
        """Exact permutation oracle: over all C(4,2) assignments of ranks
        {1,2,3,4} to group 1, the rank-sum has mean 5 and variance 5/3."""
        sums = [sum(c) for c in itertools.combinations([1, 2, 3, 4], 2)]
        mu = np.mean(sums)
        var = np.var(sums)
        assert mu == 5.0 and var == pytest.approx(5.0 / 3.0)
        w1 = 3 + 4  # ranks of {3,4} in pooled data {1,2,3,4}
        expected = (w1 - mu - 0.5) / math.sqrt(var)
        got = wilcoxon_signed(np.array([3.0, 4.0, 1.0, 2.0]), _disc([1, 1, 2, 2]))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_sign_direction(self):
        assert wilcoxon_signed(np.array([3.0, 4.0, 1.0, 2.0]), _disc([1, 1, 2, 2])) > 0
        assert wilcoxon_signed(np.array([1.0, 2.0, 3.0, 4.0]), _disc([1, 1, 2, 2])) < 0

    def test_null_mean_near_zero(self):
        n, p = 40, 10_000
        g = gen(44)
        X = g.random((n, p))
        d = feature_stats(
            DataMatrix(X), _disc(np.repeat([1, 2], n // 2)), TestConfig(kind="wilcoxon_signed")
        )
        assert abs(d.stats.mean()) < 0.05

    def test_heavy_ties_midranks(self):
        # count-like data with many ties still gives a finite, sane statistic
        g = gen(45)
        x = g.poisson(2.0, size=30).astype(float)
        v = wilcoxon_signed(x, _disc(np.repeat([1, 2], 15)))
        assert np.isfinite(v)


class TestPoisGlm:
    def test_constant_counts_zero_and_flagged(self):
        labels = _cont(np.linspace(-1, 1, 6))
        assert pois_glm_wald(np.full(6, 5.0), labels) == 0.0
        d = feature_stats(
            DataMatrix(np.full((6, 2), 3.0)), labels, TestConfig(kind="pois_glm_wald")
        )
        assert (d.stats == 0).all()
        assert (d.flags == FLAG_DEGENERATE).all()

    def test_saturated_two_point_oracle(self):
        """n=2 saturated fit has the closed form b1 = log(3)/2 and the
        information matrix [[4,2],[2,4]], so se(b1) = sqrt(4/12)."""
        b1 = math.log(3.0) / 2.0
        se = math.sqrt(4.0 / 12.0)
        got = pois_glm_wald(np.array([1.0, 3.0]), _cont([-1.0, 1.0]))
        assert got == pytest.approx(b1 / se, rel=1e-6)

    def test_null_wald_is_standard_normal(self):
        n, p = 500, 2000
        g = gen(46)
        L = g.standard_normal(n)
        L -= L.mean()
        X = g.poisson(3.0, size=(n, p)).astype(float)
        d = feature_stats(DataMatrix(X), _cont(L), TestConfig(kind="pois_glm_wald"))
        assert sps.kstest(d.stats, "norm").pvalue > 0.01

    def test_association_detected(self):
        g = gen(47)
        L = g.standard_normal(200)
        L -= L.mean()
        y = g.poisson(np.exp(1.0 + 0.5 * L))
        assert pois_glm_wald(y.astype(float), _cont(L)) > 5.0

    def test_nonnegative_integer_counts_required(self):
        labels = _cont(np.linspace(-1, 1, 4))
        with pytest.raises(DataError):
            pois_glm_wald(np.array([0.5, 1.0, 2.0, 3.0]), labels)
        with pytest.raises(DataError):
            pois_glm_wald(np.array([-1.0, 1.0, 2.0, 3.0]), labels)


class TestVectorizedConsistency:
    def test_single_column_matches_scalar_ops(self):
        g = gen(48)
        x = g.standard_normal(30)
        labels = _disc(np.where(g.random(30) < 0.5, 1, 2))
        for kind, scalar in [
            ("welch_t", welch_t),
            ("wilcoxon_signed", wilcoxon_signed),
        ]:
            d = feature_stats(x[:, None], labels, TestConfig(kind=kind))
            assert d.stats[0] == pytest.approx(scalar(x, labels), rel=1e-12)
        dz = feature_stats(
            x[:, None], labels, TestConfig(kind="z_known_var", known_sigma=2.0)
        )
        assert dz.stats[0] == pytest.approx(z_stat_known_var(x, labels, 2.0), rel=1e-12)

    def test_column_permutation_equivariance(self):
        g = gen(49)
        X = g.standard_normal((40, 25))
        labels = _disc(np.repeat([1, 2], 20))
        perm = g.permutation(25)
        d = feature_stats(X, labels, TestConfig(kind="welch_t"))
        dp = feature_stats(X[:, perm], labels, TestConfig(kind="welch_t"))
        np.testing.assert_array_equal(d.stats[perm], dp.stats)

    def test_null_rejection_rate_near_level(self):
        n, p = 100, 10_000
        g = gen(50)
        X = g.standard_normal((n, p))
        d = feature_stats(DataMatrix(X), _disc(np.repeat([1, 2], 50)), TestConfig(kind="welch_t"))
        frac = float(np.mean(np.abs(d.stats) > 1.96))
        assert abs(frac - 0.05) < 0.01


class TestInvariances:
    def test_label_swap_negates_exactly(self):
        g = gen(51)
        X = g.standard_normal((30, 40))
        lab = np.where(g.random(30) < 0.4, 1, 2)
        swapped = 3 - lab
        for kind in ("welch_t", "wilcoxon_signed"):
            d1 = feature_stats(X, _disc(lab), TestConfig(kind=kind))
            d2 = feature_stats(X, _disc(swapped), TestConfig(kind=kind))
            np.testing.assert_array_equal(d1.stats, -d2.stats)
        dz1 = feature_stats(X, _disc(lab), TestConfig(kind="z_known_var", known_sigma=1.0))
        dz2 = feature_stats(X, _disc(swapped), TestConfig(kind="z_known_var", known_sigma=1.0))
        np.testing.assert_array_equal(dz1.stats, -dz2.stats)

    def test_pseudotime_negation_negates_glm_exactly(self):
        g = gen(52)
        L = g.standard_normal(80)
        L -= L.mean()
        X = g.poisson(3.0, size=(80, 30)).astype(float)
        d1 = feature_stats(X, _cont(L), TestConfig(kind="pois_glm_wald"))
        d2 = feature_stats(X, _cont(-L), TestConfig(kind="pois_glm_wald"))
        np.testing.assert_array_equal(d1.stats, -d2.stats)

    def test_scale_equivariance(self):
        g = gen(53)
        x = g.standard_normal(24)
        labels = _disc(np.repeat([1, 2], 12))
        base_t = welch_t(x, labels)
        assert welch_t(2.0 * x, labels) == base_t  # powers of two are exact
        assert welch_t(1.7 * x, labels) == pytest.approx(base_t, rel=1e-12)
        base_z = z_stat_known_var(x, labels, 1.3)
        assert z_stat_known_var(1.7 * x, labels, 1.7 * 1.3) == pytest.approx(base_z, rel=1e-12)

    def test_null_statistics_symmetric(self):
        """Sign test over null features: signs of d_j are fair coin flips."""
        n, p = 50, 10_000
        g = gen(54)
        X = g.standard_normal((n, p))
        d = feature_stats(DataMatrix(X), _disc(np.repeat([1, 2], 25)), TestConfig(kind="welch_t"))
        npos = int((d.stats > 0).sum())
        nz = int((d.stats != 0).sum())
        assert sps.binomtest(npos, nz, 0.5).pvalue > 0.01
