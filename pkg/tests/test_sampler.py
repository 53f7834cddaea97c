import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from bornsim.errors import CapacityError, DomainError, InsufficientCountsError
from bornsim.hilbert import OutcomeSpec
from bornsim.sampler import (
    CHUNK_SIZE,
    PatternHistogram,
    SamplerConfig,
    branch_indistinguishability_test,
    pattern_frequency_test,
    pattern_probabilities,
    permutation_symmetry_test,
    sample_branch_spheres,
)

THIRD = OutcomeSpec.binary(Fraction(1, 3))
HALF = OutcomeSpec.binary(Fraction(1, 2))


def draw(spec, size, count, seed, threads=None):
    return sample_branch_spheres(SamplerConfig(spec, size, count, seed), threads=threads)


def expected_histogram(spec, size, count):
    q = pattern_probabilities(spec, size)
    return PatternHistogram(spec.m, size, np.rint(q * count).astype(np.int64))


class TestConfig:
    def test_cap(self):
        with pytest.raises(CapacityError):
            SamplerConfig(THIRD, 21, 10, 0)
        SamplerConfig(THIRD, 20, 10, 0)

    def test_seed_range(self):
        with pytest.raises(DomainError):
            SamplerConfig(THIRD, 4, 10, -1)
        with pytest.raises(DomainError):
            SamplerConfig(THIRD, 4, 10, 2**64)


class TestSampling:
    def test_deterministic(self):
        a = draw(THIRD, 8, 50_000, 42)
        b = draw(THIRD, 8, 50_000, 42)
        assert np.array_equal(a.counts, b.counts)
        assert a.total == 50_000

    def test_seed_matters(self):
        assert not np.array_equal(draw(THIRD, 8, 5000, 1).counts, draw(THIRD, 8, 5000, 2).counts)

    def test_thread_invariance(self):
        count = 3 * CHUNK_SIZE + 17
        one = draw(THIRD, 6, count, 9, threads=1)
        many = draw(THIRD, 6, count, 9, threads=4)
        assert np.array_equal(one.counts, many.counts)

    def test_env_thread_cap(self, monkeypatch):
        monkeypatch.setenv("BORNSIM_THREADS", "3")
        a = draw(THIRD, 5, 2 * CHUNK_SIZE, 4)
        monkeypatch.setenv("BORNSIM_THREADS", "1")
        assert np.array_equal(a.counts, draw(THIRD, 5, 2 * CHUNK_SIZE, 4).counts)

    def test_degenerate(self):
        hist = draw(OutcomeSpec.from_probs([1, 0]), 6, 1234, 0)
        assert hist.as_dict() == {"000000": 1234}

    def test_chunks_merge_associatively(self):
        a = draw(THIRD, 4, 100, 1)
        b = draw(THIRD, 4, 200, 2)
        c = draw(THIRD, 4, 300, 3)
        assert np.array_equal(((a + b) + c).counts, (a + (b + c)).counts)
        with pytest.raises(DomainError):
            a + draw(THIRD, 5, 10, 1)

    def test_dict_round_trip(self):
        hist = draw(OutcomeSpec.from_probs(["1/2", "1/4", "1/4"]), 3, 1000, 5)
        back = PatternHistogram.from_dict(3, 3, hist.as_dict())
        assert np.array_equal(back.counts, hist.counts)

    def test_per_pattern_three_sigma(self):
        q = pattern_probabilities(THIRD, 8)
        sigma = np.sqrt(q * (1 - q) / 1e5)
        # with 256 patterns a few 3-sigma excursions per draw are expected;
        # require the excursion count to stay within its 1e-3 binomial quantile
        allowed = stats.binom.isf(1e-3, q.size, math.erfc(3 / math.sqrt(2)))
        for seed in range(10):
            freq = draw(THIRD, 8, 10**5, seed).counts / 1e5
            assert np.count_nonzero(np.abs(freq - q) > 3 * sigma) <= allowed

    def test_marginals_four_sigma(self):
        spec = OutcomeSpec.from_probs(["1/2", "1/3", "1/6"])
        hist = draw(spec, 6, 10**5, 17)
        p = np.array([float(x) for x in spec.probs])
        sigma = np.sqrt(p * (1 - p) / 1e5)
        assert np.all(np.abs(hist.site_marginals() - p) <= 4 * sigma)

    def test_multinomial_chi2_goodness_of_fit(self):
        hist = draw(THIRD, 3, 10**5, 23)
        q = pattern_probabilities(THIRD, 3)
        assert stats.chisquare(hist.counts, q * hist.total).pvalue > 1e-3


class TestPatternFrequency:
    def test_exact_expectation_passes(self):
        hist = expected_histogram(THIRD, 6, 10**5)
        report = pattern_frequency_test(hist, THIRD, 3.0)
        assert report.passed and report.flagged == 0

    def test_adversarial_pattern_flagged(self):
        hist = expected_histogram(THIRD, 8, 10**5)
        target = 37
        hist.counts[target] *= 2
        report = pattern_frequency_test(hist, THIRD, 3.0)
        row = next(r for r in report.rows if r.code == target)
        assert row.flagged and row.z > 3

    def test_impossible_pattern_fails(self):
        spec = OutcomeSpec.from_probs([1, 0])
        hist = PatternHistogram(2, 2, np.array([99, 1, 0, 0]))
        report = pattern_frequency_test(hist, spec, 4.0)
        # both the certain cell and the impossible cell are off
        assert report.impossible_seen == 2 and not report.passed

    def test_sampled_passes_over_seeds(self):
        passes = sum(pattern_frequency_test(draw(THIRD, 4, 10**5, s), THIRD, 4.0).passed for s in range(20))
        assert passes >= 19

    def test_empty(self):
        with pytest.raises(InsufficientCountsError):
            pattern_frequency_test(PatternHistogram(2, 2, np.zeros(4, dtype=np.int64)), THIRD, 3.0)


class TestHomogeneity:
    def test_identical_histograms(self):
        hist = draw(THIRD, 8, 10**5, 3)
        res = branch_indistinguishability_test(hist, hist)
        assert res.statistic == 0 and res.indistinguishable

    def test_matches_scipy_contingency(self):
        a = draw(THIRD, 3, 20_000, 1)
        b = draw(THIRD, 3, 30_000, 2)
        res = branch_indistinguishability_test(a, b)
        ref = stats.chi2_contingency(np.vstack([a.counts, b.counts]), correction=False)
        assert res.bins == 8
        assert res.statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert res.dof == ref.dof
        assert res.p_value == pytest.approx(ref.pvalue, rel=1e-8)

    def test_pooling_reaches_min_expected(self):
        a = draw(THIRD, 8, 2000, 1)
        b = draw(THIRD, 8, 2000, 2)
        res = branch_indistinguishability_test(a, b)
        assert res.bins < 256

    def test_same_spec_indistinguishable(self):
        results = [
            branch_indistinguishability_test(draw(THIRD, 8, 10**5, 2 * s + 1), draw(THIRD, 8, 10**5, 2 * s + 2))
            for s in range(5)
        ]
        assert sum(r.indistinguishable for r in results) >= 4

    def test_different_spec_distinguishable(self):
        res = branch_indistinguishability_test(draw(THIRD, 8, 10**5, 1), draw(HALF, 8, 10**5, 2))
        assert not res.indistinguishable and res.statistic > 10 * res.critical

    def test_insufficient(self):
        a = PatternHistogram(2, 1, np.array([3, 0]))
        with pytest.raises(InsufficientCountsError):
            branch_indistinguishability_test(a, a)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            branch_indistinguishability_test(draw(THIRD, 3, 100, 1), draw(THIRD, 4, 100, 1))


class TestPermutationSymmetry:
    def test_passes_over_seeds(self):
        verdicts = [permutation_symmetry_test(draw(THIRD, 8, 10**5, s)).indistinguishable for s in range(20)]
        assert sum(verdicts) >= 18

    def test_detects_asymmetry(self):
        hist = expected_histogram(THIRD, 6, 10**5)
        hist.counts[1] += 1000
        hist.counts[2] -= 1000
        assert not permutation_symmetry_test(hist).indistinguishable
