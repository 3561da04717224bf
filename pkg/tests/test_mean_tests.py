#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
import numpy as np
import pytest
from func_core import FunctionalSample, NuMeasure
from mean_tests import (
    TestConfig, TestOutcome, decide, decision_grid,
    one_sample_equivalence_test, one_sample_normalizer, one_sample_statistic,
    one_sample_test, two_sample_contrast, two_sample_equivalence_test,
    two_sample_profile, two_sample_test
)
from pivotal import PivotalQuantiles
from utils.general import PreconditionError

# decisions reported for the temperature data (statistic 14.115, normalizer 0.315)
TEMPERATURE_DECISIONS = {
    9.0: (True, True, True),
    9.1: (False, True, True),
    10.7: (False, True, True),
    10.8: (False, False, True),
    11.7: (False, False, True),
    11.8: (False, False, False),
}


class TestOneSampleStatistics:
    def test_statistic(self, constant_sample, grid):
        assert one_sample_statistic(constant_sample([2.0] * 5)) == pytest.approx(4.0, abs=1e-12)
        assert one_sample_statistic(constant_sample([1, 3, 5, 7])) == pytest.approx(16.0, abs=1e-12)
        rng = np.random.default_rng(0)
        half = rng.standard_normal((3, grid.resolution))
        values = np.empty((6, grid.resolution))
        values[0::2], values[1::2] = half, -half
        balanced = FunctionalSample(grid, values)
        assert one_sample_statistic(balanced) == pytest.approx(0.0, abs=1e-24)

    def test_normalizer_vanishes_on_aligned_floors(self, constant_sample, nu19):
        assert one_sample_normalizer(constant_sample([1.0] * 20), nu19) == pytest.approx(0.0, abs=1e-12)

    def test_normalizer_point_mass(self, constant_sample):
        sample = constant_sample([1, 3, 5, 7])
        nu = NuMeasure.point_mass(0.5)
        for kind in ('standard', 'sup', 'abs'):
            assert one_sample_normalizer(sample, nu, kind) == pytest.approx(3.0, abs=1e-10)

    def test_zero_sample(self, constant_sample, nu19):
        assert one_sample_normalizer(constant_sample([0.0] * 7), nu19) == 0.0


class TestOneSampleTest:
    def test_degenerate_normalizer(self, constant_sample, tabulated_w, nu19):
        sample = constant_sample([2.0] * 20)
        reject = one_sample_test(sample, TestConfig(3.0, 0.05, nu19, tabulated_w))
        accept = one_sample_test(sample, TestConfig(5.0, 0.05, nu19, tabulated_w))
        assert reject.reject and not accept.reject
        assert reject.quantile_used == 10.530
        assert reject.statistic == pytest.approx(4.0, abs=1e-12)

    def test_zero_sample_is_never_relevant(self, constant_sample, tabulated_w, nu19):
        result = one_sample_test(constant_sample([0.0] * 20), TestConfig(1e-6, 0.05, nu19, tabulated_w))
        assert not result.reject

    def test_zero_delta_is_refused(self, tabulated_w, nu19):
        with pytest.raises(PreconditionError, match='asymptotic level'):
            TestConfig(0.0, 0.05, nu19, tabulated_w)

    def test_table_must_match(self, tabulated_w, nu19):
        with pytest.raises(PreconditionError):
            TestConfig(1.0, 0.05, nu19, tabulated_w, normalizer_kind='sup')
        with pytest.raises(PreconditionError):
            TestConfig(1.0, 0.05, NuMeasure.uniform(4), tabulated_w)

    def test_outcome_document(self, constant_sample, tabulated_w, nu19):
        document = one_sample_test(constant_sample([2.0] * 20), TestConfig(3.0, 0.01, nu19, tabulated_w)).to_dict()
        assert document['test'] == 'one-sample'
        assert document['quantile'] == 16.081
        assert document['reject'] is True
        assert len(document['nu']['support']) == 19

    def test_outcome_owns_its_extras(self):
        extras = {'m': 3}
        result = TestOutcome(1.0, 0.5, 5.0, 3.5, False, test='two-sample', extras=extras)
        extras['m'] = 4
        assert result.to_dict()['m'] == 3
        assert TestOutcome(1.0, 0.5, 5.0, 3.5, False).extras == {}
        assert 'reject=False' in repr(result)

    def test_scale_equivariance(self, grid, tabulated_w, nu19):
        rng = np.random.default_rng(21)
        sample = FunctionalSample(grid, 0.3 + rng.standard_normal((40, grid.resolution)))
        for c in (0.5, 3.0):
            for delta in (0.05, 0.09, 0.2):
                base = one_sample_test(sample, TestConfig(delta, 0.05, nu19, tabulated_w))
                scaled = one_sample_test(sample.scaled(c), TestConfig(delta * c ** 2, 0.05, nu19, tabulated_w))
                assert scaled.reject == base.reject
                assert scaled.statistic == pytest.approx(c ** 2 * base.statistic, rel=1e-10)
                assert scaled.normalizer == pytest.approx(c ** 2 * base.normalizer, rel=1e-10)


class TestEquivalenceTest:
    def test_zero_sample_is_equivalent(self, constant_sample, tabulated_w, nu19):
        result = one_sample_equivalence_test(constant_sample([0.0] * 20), TestConfig(1.0, 0.05, nu19, tabulated_w))
        assert result.reject
        assert result.direction == 'equivalence'

    def test_large_mean_is_not_equivalent(self, constant_sample, tabulated_w, nu19):
        result = one_sample_equivalence_test(constant_sample([4.0] * 20), TestConfig(1.0, 0.05, nu19, tabulated_w))
        assert not result.reject

    def test_lower_quantile_from_symmetry(self, constant_sample):
        nu = NuMeasure.point_mass(0.5)
        table = PivotalQuantiles('W', nu, 1000, 2000, 42, {0.95: 10.53})
        result = one_sample_equivalence_test(constant_sample([1, 3, 5, 7]), TestConfig(1.0, 0.05, nu, table))
        assert result.quantile_used == -10.53
        assert result.threshold < 1.0
        assert not result.reject


class TestTwoSample:
    def test_contrast(self, constant_sample):
        x = constant_sample([1.0] * 6)
        y = constant_sample([0.0] * 6)
        assert np.array_equal(two_sample_contrast(x, x, 0.7).values, np.zeros(x.grid.resolution))
        assert np.array_equal(two_sample_contrast(x, y, 1.0).values, np.ones(x.grid.resolution))
        assert np.array_equal(two_sample_contrast(x, y, 0.0).values, np.zeros(x.grid.resolution))

    def test_floors_are_taken_per_sample(self, constant_sample):
        nu = NuMeasure.point_mass(0.5)
        profile = two_sample_profile(constant_sample([1.0] * 3), constant_sample([0.0] * 4), nu)
        # floor(3/2) = 1 of 3 against floor(4/2) = 2 of 4
        assert profile[0.5] == pytest.approx(1.0 / 9.0, abs=1e-12)

    def test_unit_difference(self, constant_sample, tabulated_w, nu19):
        x = constant_sample([1.0] * 20)
        y = constant_sample([0.0] * 20)
        result = two_sample_test(x, y, TestConfig(0.5, 0.05, nu19, tabulated_w))
        assert result.statistic == pytest.approx(1.0, abs=1e-12)
        assert result.normalizer == pytest.approx(0.0, abs=1e-12)
        assert result.reject
        assert result.extras == {'m': 20, 'n': 20}

    def test_identical_samples(self, grid, tabulated_w, nu19):
        rng = np.random.default_rng(4)
        x = FunctionalSample(grid, rng.standard_normal((20, grid.resolution)))
        result = two_sample_test(x, x, TestConfig(0.01, 0.05, nu19, tabulated_w))
        assert result.statistic == 0.0
        assert not result.reject

    def test_equivalence_mirror(self, constant_sample, tabulated_w, nu19):
        x = constant_sample([1.0] * 20)
        result = two_sample_equivalence_test(x, x, TestConfig(0.5, 0.05, nu19, tabulated_w))
        assert result.reject
        assert result.quantile_used == -10.530


class TestDecisionRule:
    def test_temperature_thresholds(self):
        threshold, reject = decide(14.115, 0.315, 10.7, 10.530)
        assert threshold == pytest.approx(14.017, abs=1e-3)
        assert reject
        threshold, reject = decide(14.115, 0.315, 10.8, 10.530)
        assert threshold == pytest.approx(14.117, abs=1e-3)
        assert not reject

    def test_strict_inequality(self):
        assert decide(3.0, 0.0, 3.0, 10.0) == (3.0, False)
        assert decide(3.0, 0.0, 3.0, 10.0, 'equivalence') == (3.0, True)
        with pytest.raises(ValueError):
            decide(1.0, 1.0, 1.0, 1.0, 'sideways')

    def test_temperature_table(self, tabulated_w):
        levels = {0.99: tabulated_w.upper(0.01), 0.95: tabulated_w.upper(0.05), 0.90: tabulated_w.upper(0.10)}
        grid = decision_grid(14.115, 0.315, list(TEMPERATURE_DECISIONS), levels)
        assert list(grid.columns) == ['99%', '95%', '90%']
        for delta, expected in TEMPERATURE_DECISIONS.items():
            assert tuple(bool(v) for v in grid.loc[delta]) == expected
