#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple
import logging
from dataclasses import dataclass
import numpy as np
import pandas as pd
from func_core import (
    Curve, FunctionalSample, NuMeasure, NORMALIZER_KINDS,
    check_same_grid, floor_index, partial_sum, self_normalizer
)
from pivotal import PivotalQuantiles
from utils.general import PreconditionError

logger = logging.getLogger(__name__)

DIRECTIONS = ('relevant', 'equivalence')
DELTA_CAVEAT = (
    'the self-normalized procedure does not lead to an asymptotic level alpha '
    'test when delta = 0; choose a threshold delta > 0'
)


def check_delta(delta: float) -> None:
    if not delta > 0:
        raise PreconditionError(f'delta must be > 0 (got {delta}): {DELTA_CAVEAT}')
    return


@dataclass(frozen=True)
class TestConfig:
    __test__ = False

    delta: float
    alpha: float
    nu: NuMeasure
    quantiles: PivotalQuantiles
    normalizer_kind: str = 'standard'

    def __post_init__(self: TestConfig) -> None:
        check_delta(self.delta)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f'alpha must lie in (0, 1) ({self.alpha})')
        if self.normalizer_kind not in NORMALIZER_KINDS:
            raise ValueError(f'unknown normalizer kind: {self.normalizer_kind}')
        self.quantiles.check_matches(self.normalizer_kind, self.nu)
        return


class TestOutcome(object):
    '''
    decision of one test; to_dict() puts the extras at the top level
    '''
    __test__ = False

    def __init__(
        self: TestOutcome,
        statistic: float,
        normalizer: float,
        quantile_used: float,
        threshold: float,
        reject: bool,
        direction: str = 'relevant',
        test: str = '',
        alpha: Optional[float] = None,
        delta: Optional[float] = None,
        nu: Optional[NuMeasure] = None,
        normalizer_kind: str = 'standard',
        extras: Optional[Dict[str, Any]] = None
    ) -> None:
        self.statistic = statistic
        self.normalizer = normalizer
        self.quantile_used = quantile_used
        self.threshold = threshold
        self.reject = reject
        self.direction = direction
        self.test = test
        self.alpha = alpha
        self.delta = delta
        self.nu = nu
        self.normalizer_kind = normalizer_kind
        self.extras = dict() if extras is None else dict(extras)
        return

    def to_dict(self: TestOutcome) -> Dict[str, Any]:
        document = {
            'test': self.test,
            'statistic': self.statistic,
            'normalizer': self.normalizer,
            'quantile': self.quantile_used,
            'alpha': self.alpha,
            'delta': self.delta,
            'threshold': self.threshold,
            'reject': self.reject,
            'direction': self.direction,
            'nu': None if self.nu is None else self.nu.to_dict(),
            'normalizer_kind': self.normalizer_kind,
        }
        document.update(self.extras)
        return document

    def __repr__(self: TestOutcome) -> str:
        return f'TestOutcome({self.test}, statistic={self.statistic:.6g}, reject={self.reject})'


def decide(
    statistic: float,
    normalizer: float,
    delta: float,
    quantile: float,
    direction: str = 'relevant'
) -> Tuple[float, bool]:
    # strict inequality for the relevant direction, also when normalizer is 0
    threshold = delta + quantile * normalizer
    if direction == 'relevant':
        return threshold, bool(statistic > threshold)
    elif direction == 'equivalence':
        return threshold, bool(statistic <= threshold)
    raise ValueError(f'unknown direction: {direction} (expected one of {DIRECTIONS})')


def outcome(
    test: str,
    statistic: float,
    normalizer: float,
    config: TestConfig,
    direction: str = 'relevant',
    extras: Optional[Dict[str, Any]] = None
) -> TestOutcome:
    if direction == 'relevant':
        q = config.quantiles.upper(config.alpha)
    else:
        q = config.quantiles.lower(config.alpha)
    threshold, reject = decide(statistic, normalizer, config.delta, q, direction)
    return TestOutcome(
        statistic=statistic,
        normalizer=normalizer,
        quantile_used=q,
        threshold=threshold,
        reject=reject,
        direction=direction,
        test=test,
        alpha=config.alpha,
        delta=config.delta,
        nu=config.nu,
        normalizer_kind=config.normalizer_kind,
        extras=dict() if extras is None else extras,
    )


def profile_fractions(nu: NuMeasure) -> Sequence[float]:
    # every atom of nu, then lambda = 1
    return [float(lam) for lam in nu.support] + [1.0]


def scaled_partial_sums(values: np.ndarray, fractions: Sequence[float]) -> np.ndarray:
    # row i: (1/n) * sum of the first floor(n * fractions[i]) curves
    n = values.shape[0]
    cumulative = np.vstack([np.zeros((1, values.shape[1])), np.cumsum(values, axis=0)])
    counts = [floor_index(n, lam) for lam in fractions]
    return cumulative[counts] / n


def squared_norms(weights: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # trapezoid of each row squared
    return (rows * rows) @ weights


def one_sample_profile(sample: FunctionalSample, nu: NuMeasure) -> Dict[float, float]:
    fractions = profile_fractions(nu)
    sums = scaled_partial_sums(sample.values, fractions)
    values = squared_norms(sample.grid.weights, sums)
    return dict(zip(fractions, values.tolist()))


def one_sample_statistic(sample: FunctionalSample) -> float:
    mean = partial_sum(sample, 1.0)
    return float(np.sum(sample.grid.weights * mean.values ** 2))


def one_sample_normalizer(
    sample: FunctionalSample,
    nu: NuMeasure,
    kind: str = 'standard'
) -> float:
    return self_normalizer(one_sample_profile(sample, nu), nu, kind)


def _one_sample(sample: FunctionalSample, config: TestConfig) -> Tuple[float, float]:
    check_delta(config.delta)
    profile = one_sample_profile(sample, config.nu)
    return profile[1.0], self_normalizer(profile, config.nu, config.normalizer_kind)


def one_sample_test(sample: FunctionalSample, config: TestConfig) -> TestOutcome:
    '''
    relevant one-sample test of H0: ||mu||^2 <= delta

    rejects when T > delta + q_{1-alpha} * V
    '''
    statistic, normalizer = _one_sample(sample, config)
    return outcome('one-sample', statistic, normalizer, config)


def one_sample_equivalence_test(sample: FunctionalSample, config: TestConfig) -> TestOutcome:
    # H0: ||mu||^2 > delta, rejected when T <= delta + q_alpha * V
    statistic, normalizer = _one_sample(sample, config)
    return outcome(
        'one-sample-equivalence', statistic, normalizer, config, direction='equivalence'
    )


def two_sample_contrast(x: FunctionalSample, y: FunctionalSample, lam: float) -> Curve:
    check_same_grid(x.grid, y.grid)
    return partial_sum(x, lam) - partial_sum(y, lam)


def two_sample_profile(
    x: FunctionalSample,
    y: FunctionalSample,
    nu: NuMeasure
) -> Dict[float, float]:
    grid = check_same_grid(x.grid, y.grid)
    fractions = profile_fractions(nu)
    # floor(m * lambda) and floor(n * lambda) are taken independently
    contrast = (
        scaled_partial_sums(x.values, fractions) -
        scaled_partial_sums(y.values, fractions)
    )
    values = squared_norms(grid.weights, contrast)
    return dict(zip(fractions, values.tolist()))


def _two_sample(
    x: FunctionalSample,
    y: FunctionalSample,
    config: TestConfig
) -> Tuple[float, float]:
    check_delta(config.delta)
    profile = two_sample_profile(x, y, config.nu)
    return profile[1.0], self_normalizer(profile, config.nu, config.normalizer_kind)


def two_sample_test(
    x: FunctionalSample,
    y: FunctionalSample,
    config: TestConfig
) -> TestOutcome:
    statistic, normalizer = _two_sample(x, y, config)
    return outcome(
        'two-sample', statistic, normalizer, config, extras={'m': x.n, 'n': y.n}
    )


def two_sample_equivalence_test(
    x: FunctionalSample,
    y: FunctionalSample,
    config: TestConfig
) -> TestOutcome:
    statistic, normalizer = _two_sample(x, y, config)
    return outcome(
        'two-sample-equivalence', statistic, normalizer, config,
        direction='equivalence', extras={'m': x.n, 'n': y.n}
    )


def decision_grid(
    statistic: float,
    normalizer: float,
    deltas: Sequence[float],
    quantiles: Mapping[float, float],
    direction: str = 'relevant'
) -> pd.DataFrame:
    '''
    decisions for several thresholds and confidence levels

    quantiles maps a confidence level (0.99, 0.95, ...) to q at that level;
    rows are indexed by delta, columns are labelled like "99%"
    '''
    levels = sorted(quantiles, reverse=True)
    rows = list()
    for delta in deltas:
        row = dict()
        for level in levels:
            _, reject = decide(statistic, normalizer, delta, quantiles[level], direction)
            row[f'{level * 100:g}%'] = reject
        rows.append(row)
    return pd.DataFrame(rows, index=pd.Index(list(deltas), name='delta'))
