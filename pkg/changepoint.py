#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging
from dataclasses import dataclass
import numpy as np
from func_core import (
    Curve, FunctionalSample, NuMeasure, floor_index, self_normalizer
)
from mean_tests import (
    TestConfig, TestOutcome, check_delta, outcome, profile_fractions, squared_norms
)
from pivotal import PivotalQuantiles
from utils.general import PreconditionError

logger = logging.getLogger(__name__)

# trimming used in simulations
DEFAULT_TRIM = 0.05
# trimming for short real-data series
DATA_TRIM = 0.1
# segments shorter than this cannot carry a contrast
MIN_SEGMENT = 2


class ChangePointFit(object):
    def __init__(
        self: ChangePointFit,
        theta_hat: float,
        k_hat: int,
        profile: Optional[Dict[int, float]] = None,
        trim: float = DEFAULT_TRIM,
        estimated: bool = True
    ) -> None:
        self.theta_hat = theta_hat
        self.k_hat = k_hat
        self.profile = dict() if profile is None else profile
        self.trim = trim
        # False when the break was supplied instead of estimated
        self.estimated = estimated
        return

    def to_dict(self: ChangePointFit) -> Dict[str, Any]:
        return {
            'theta_hat': self.theta_hat,
            'k_hat': self.k_hat,
            'trim': self.trim,
            'estimated': self.estimated,
        }

    def __repr__(self: ChangePointFit) -> str:
        return f'ChangePointFit(k_hat={self.k_hat}, theta_hat={self.theta_hat:.4g})'


@dataclass(frozen=True)
class MultiCpConfig:
    k_breaks: int
    delta: float
    alpha: float
    nu: NuMeasure
    quantiles: PivotalQuantiles
    trim: float = DEFAULT_TRIM

    def __post_init__(self: MultiCpConfig) -> None:
        if self.k_breaks < 1:
            raise ValueError(f'number of breaks must be >= 1 ({self.k_breaks})')
        check_delta(self.delta)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f'alpha must lie in (0, 1) ({self.alpha})')
        _check_trim(self.trim)
        self.quantiles.check_matches('standard', self.nu)
        return


def _check_trim(trim: float) -> None:
    if not 0.0 <= trim < 0.5:
        raise ValueError(f'trim must lie in [0, 1/2) ({trim})')
    return


def admissible_range(n: int, trim: float) -> Tuple[int, int]:
    # [floor(n * trim) + 1, n - floor(n * trim)]
    _check_trim(trim)
    cut = floor_index(n, trim)
    low, high = cut + 1, n - cut
    if n < 2 or low > high:
        raise ValueError(f'no admissible break for n={n}, trim={trim}')
    return low, high


def _cusum_values(values: np.ndarray, weights: np.ndarray, ks: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    # segment means are unchanged by centering; rounding no longer depends on the level
    centered = values - values.mean(axis=0)
    cumulative = np.cumsum(centered, axis=0)
    head = cumulative[ks - 1]
    pre = head / ks[:, np.newaxis]
    rest = np.maximum(n - ks, 1)[:, np.newaxis]
    post = (cumulative[-1] - head) / rest
    fraction = ks / n
    f = fraction * (1.0 - fraction) * squared_norms(weights, pre - post)
    # f(n) = 0
    return np.where(ks < n, f, 0.0)


def cusum_profile(sample: FunctionalSample, trim: float = DEFAULT_TRIM) -> Dict[int, float]:
    low, high = admissible_range(sample.n, trim)
    ks = np.arange(low, high + 1)
    values = _cusum_values(sample.values, sample.grid.weights, ks)
    return dict(zip(ks.tolist(), values.tolist()))


def estimate_changepoint(sample: FunctionalSample, trim: float = DEFAULT_TRIM) -> ChangePointFit:
    '''
    argmax of the CUSUM profile over the trimmed range

    np.argmax returns the first maximum, so ties go to the smallest k
    '''
    profile = cusum_profile(sample, trim)
    ks = list(profile)
    k_hat = ks[int(np.argmax([profile[k] for k in ks]))]
    return ChangePointFit(
        theta_hat=k_hat / sample.n, k_hat=k_hat, profile=profile, trim=trim
    )


def population_profile(theta: float, theta0: float, delta_sq: float) -> float:
    # noiseless CUSUM target for a single break of squared size delta_sq at theta0
    if not 0.0 < theta < 1.0:
        raise ValueError(f'theta must lie in (0, 1) ({theta})')
    ratio = min(theta0 / theta, (1.0 - theta0) / (1.0 - theta))
    return theta * (1.0 - theta) * ratio ** 2 * delta_sq


def _break_index(n: int, theta: float) -> int:
    k_theta = floor_index(n, theta)
    if theta < 1.0 / n or theta >= 1.0 or not 1 <= k_theta <= n - 1:
        raise ValueError(f'theta must lie in [1/N, 1) ({theta}, N={n})')
    return k_theta


def _with_zero_row(values: np.ndarray) -> np.ndarray:
    return np.vstack([np.zeros((1, values.shape[1])), np.cumsum(values, axis=0)])


def _pair_contrast(
    cumulative: np.ndarray,
    left_start: int,
    left_length: int,
    right_start: int,
    right_length: int,
    lam: float
) -> np.ndarray:
    # mean-scaled head of the left segment minus head of the right segment
    a = floor_index(left_length, lam)
    b = floor_index(right_length, lam)
    left = (cumulative[left_start + a] - cumulative[left_start]) / left_length
    right = (cumulative[right_start + b] - cumulative[right_start]) / right_length
    return left - right


def cp_contrast(sample: FunctionalSample, lam: float, theta: float) -> Curve:
    if lam < 0.0 or lam > 1.0:
        raise ValueError(f'lambda must lie in [0, 1] ({lam})')
    n = sample.n
    k_theta = _break_index(n, theta)
    cumulative = _with_zero_row(sample.values)
    values = _pair_contrast(cumulative, 0, k_theta, k_theta, n - k_theta, lam)
    return Curve(sample.grid, values)


def cp_profile(sample: FunctionalSample, nu: NuMeasure, theta: float) -> Dict[float, float]:
    n = sample.n
    k_theta = _break_index(n, theta)
    cumulative = _with_zero_row(sample.values)
    fractions = profile_fractions(nu)
    rows = np.stack([
        _pair_contrast(cumulative, 0, k_theta, k_theta, n - k_theta, lam)
        for lam in fractions
    ])
    values = squared_norms(sample.grid.weights, rows)
    return dict(zip(fractions, values.tolist()))


def changepoint_test(
    sample: FunctionalSample,
    config: TestConfig,
    trim: float = DEFAULT_TRIM,
    theta: Optional[float] = None
) -> Tuple[TestOutcome, ChangePointFit]:
    '''
    relevant change-point test of H0: ||mu_1 - mu_2||^2 <= delta

    the break is estimated by the CUSUM argmax unless theta is given
    '''
    check_delta(config.delta)
    if theta is None:
        fit = estimate_changepoint(sample, trim)
    else:
        fit = ChangePointFit(
            theta_hat=float(theta),
            k_hat=_break_index(sample.n, theta),
            trim=trim,
            estimated=False
        )
    profile = cp_profile(sample, config.nu, fit.theta_hat)
    normalizer = self_normalizer(profile, config.nu, config.normalizer_kind)
    result = outcome(
        'changepoint', profile[1.0], normalizer, config, extras=fit.to_dict()
    )
    return result, fit


def binary_segmentation(
    sample: FunctionalSample,
    k_breaks: int,
    trim: float = DEFAULT_TRIM
) -> List[float]:
    '''
    greedy binary segmentation with a known number of breaks

    each round evaluates the CUSUM profile on every current segment (trim
    relative to the segment length) and splits the segment whose maximum
    is largest; ties go to the earlier segment and the smaller k.
    with several breaks, splits never leave a side with fewer than
    MIN_SEGMENT curves; a single break is the plain CUSUM estimate
    '''
    if k_breaks < 1:
        raise ValueError(f'number of breaks must be >= 1 ({k_breaks})')
    _check_trim(trim)
    if k_breaks == 1:
        return [estimate_changepoint(sample, trim).theta_hat]
    segments = [(0, sample.n)]
    breaks = list()
    for _ in range(k_breaks):
        best = None
        for start, stop in segments:
            length = stop - start
            if length < MIN_SEGMENT:
                continue
            try:
                low, high = admissible_range(length, trim)
            except ValueError:
                continue
            # both sides keep at least MIN_SEGMENT curves
            low = max(low, MIN_SEGMENT)
            high = min(high, length - MIN_SEGMENT)
            if low > high:
                continue
            ks = np.arange(low, high + 1)
            f = _cusum_values(sample.values[start:stop], sample.grid.weights, ks)
            i = int(np.argmax(f))
            if best is None or f[i] > best[0]:
                best = (f[i], start, stop, start + int(ks[i]))
        if best is None:
            raise ValueError(
                f'cannot place break {len(breaks) + 1}: every segment is too short'
            )
        _, start, stop, k = best
        segments.remove((start, stop))
        segments.extend([(start, k), (k, stop)])
        segments.sort()
        breaks.append(k)
        logger.debug(f'break {len(breaks)} at k={k}')
    return [k / sample.n for k in sorted(breaks)]


def multi_cp_profile(
    sample: FunctionalSample,
    nu: NuMeasure,
    breaks: Sequence[float]
) -> Dict[float, float]:
    n = sample.n
    bounds = [0] + [floor_index(n, theta) for theta in breaks] + [n]
    lengths = np.diff(bounds)
    if np.any(lengths < MIN_SEGMENT):
        raise PreconditionError(
            f'segments {lengths.tolist()} from breaks {list(breaks)} are shorter than {MIN_SEGMENT}'
        )
    cumulative = _with_zero_row(sample.values)
    fractions = profile_fractions(nu)
    profile = dict()
    for lam in fractions:
        total = 0.0
        for j in range(1, len(bounds) - 1):
            contrast = _pair_contrast(
                cumulative,
                bounds[j - 1], int(lengths[j - 1]),
                bounds[j], int(lengths[j]),
                lam
            )
            total += float(np.sum(sample.grid.weights * contrast ** 2))
        profile[lam] = total
    return profile


def multi_cp_l2_test(
    sample: FunctionalSample,
    config: MultiCpConfig,
    breaks: Optional[Sequence[float]] = None
) -> TestOutcome:
    # sum of squared neighbouring-segment contrasts against delta
    if breaks is None:
        breaks = binary_segmentation(sample, config.k_breaks, config.trim)
    elif len(breaks) != config.k_breaks:
        raise ValueError(f'expected {config.k_breaks} breaks, got {len(breaks)}')
    breaks = sorted(float(theta) for theta in breaks)
    profile = multi_cp_profile(sample, config.nu, breaks)
    normalizer = self_normalizer(profile, config.nu, 'standard')
    single = TestConfig(
        delta=config.delta,
        alpha=config.alpha,
        nu=config.nu,
        quantiles=config.quantiles,
    )
    return outcome(
        'multi-cp', profile[1.0], normalizer, single,
        extras={'breaks': breaks, 'trim': config.trim}
    )
