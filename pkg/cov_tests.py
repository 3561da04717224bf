#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Dict, Optional, Tuple
import logging
import numpy as np
from func_core import (
    FunctionalSample, NuMeasure, Surface,
    check_same_grid, floor_index, integrate_sq_2d, self_normalizer
)
from mean_tests import TestConfig, TestOutcome, check_delta, outcome, profile_fractions
from changepoint import ChangePointFit, DEFAULT_TRIM, admissible_range
from utils.general import PreconditionError

logger = logging.getLogger(__name__)

# smallest atom of nu allowed for covariance tests
NU_FLOOR = 0.05
# the change-point profile needs k and N - k in [2, N - 2]
MIN_CP_SAMPLE = 5


def check_nu_floor(nu: NuMeasure, floor: float = NU_FLOOR) -> None:
    if nu.floor < floor - 1e-12:
        raise PreconditionError(
            f'covariance tests need nu without mass near zero: '
            f'smallest atom {nu.floor} < {floor}'
        )
    return


class CovarianceSums(object):
    '''
    prefix sums of curves and of their outer products

    scatter(start, length) is the residual cross-product matrix of a window
    about the window's own mean; curves are centred globally first
    '''
    def __init__(self: CovarianceSums, values: np.ndarray) -> None:
        centered = values - values.mean(axis=0)
        n, resolution = centered.shape
        self.n = n
        self.first = np.zeros((n + 1, resolution))
        np.cumsum(centered, axis=0, out=self.first[1:])
        outer = np.einsum('ji,jk->jik', centered, centered)
        self.second = np.zeros((n + 1, resolution, resolution))
        np.cumsum(outer, axis=0, out=self.second[1:])
        return

    def scatter(self: CovarianceSums, start: int, length: int) -> np.ndarray:
        resolution = self.first.shape[1]
        if length < 2:
            # a single residual about its own mean vanishes
            return np.zeros((resolution, resolution))
        s1 = self.first[start + length] - self.first[start]
        s2 = self.second[start + length] - self.second[start]
        return s2 - np.outer(s1, s1) / length


def centered_cov_partial(
    x: FunctionalSample,
    lam: float,
    divisor: str = 'm_minus_1'
) -> Surface:
    if divisor != 'm_minus_1':
        raise ValueError(f'unknown divisor convention: {divisor}')
    if x.n < 2:
        raise ValueError(f'need at least two curves ({x.n})')
    if lam < 0.0 or lam > 1.0:
        raise ValueError(f'lambda must lie in [0, 1] ({lam})')
    count = floor_index(x.n, lam)
    values = CovarianceSums(x.values).scatter(0, count) / (x.n - 1)
    return Surface(x.grid, values)


def cov_two_sample_profile(
    x: FunctionalSample,
    y: FunctionalSample,
    nu: NuMeasure
) -> Dict[float, float]:
    grid = check_same_grid(x.grid, y.grid)
    if x.n < 2 or y.n < 2:
        raise ValueError(f'need at least two curves per sample ({x.n}, {y.n})')
    sums_x = CovarianceSums(x.values)
    sums_y = CovarianceSums(y.values)
    profile = dict()
    for lam in profile_fractions(nu):
        contrast = (
            sums_x.scatter(0, floor_index(x.n, lam)) / (x.n - 1) -
            sums_y.scatter(0, floor_index(y.n, lam)) / (y.n - 1)
        )
        profile[lam] = integrate_sq_2d(grid, contrast)
    return profile


def cov_two_sample_test(
    x: FunctionalSample,
    y: FunctionalSample,
    config: TestConfig,
    nu_floor: float = NU_FLOOR
) -> TestOutcome:
    '''
    relevant test of H0: ||C_x - C_y||_HS^2 <= delta
    '''
    check_delta(config.delta)
    check_nu_floor(config.nu, nu_floor)
    profile = cov_two_sample_profile(x, y, config.nu)
    normalizer = self_normalizer(profile, config.nu, config.normalizer_kind)
    return outcome(
        'cov-two-sample', profile[1.0], normalizer, config, extras={'m': x.n, 'n': y.n}
    )


def _cov_range(n: int, trim: float) -> Tuple[int, int]:
    if n < MIN_CP_SAMPLE:
        raise ValueError(f'covariance change point needs N >= {MIN_CP_SAMPLE} ({n})')
    low, high = admissible_range(n, trim)
    low, high = max(low, 2), min(high, n - 2)
    if low > high:
        raise ValueError(f'no admissible covariance break for N={n}, trim={trim}')
    return low, high


def cov_cusum_profile(sample: FunctionalSample, trim: float = DEFAULT_TRIM) -> Dict[int, float]:
    n = sample.n
    low, high = _cov_range(n, trim)
    sums = CovarianceSums(sample.values)
    profile = dict()
    for k in range(low, high + 1):
        contrast = sums.scatter(0, k) / (k - 1) - sums.scatter(k, n - k) / (n - k - 1)
        profile[k] = (k / n) * (1.0 - k / n) * integrate_sq_2d(sample.grid, contrast)
    return profile


def estimate_cov_changepoint(
    sample: FunctionalSample,
    trim: float = DEFAULT_TRIM
) -> ChangePointFit:
    profile = cov_cusum_profile(sample, trim)
    ks = list(profile)
    k_hat = ks[int(np.argmax([profile[k] for k in ks]))]
    return ChangePointFit(
        theta_hat=k_hat / sample.n, k_hat=k_hat, profile=profile, trim=trim
    )


def cov_cp_profile(
    sample: FunctionalSample,
    nu: NuMeasure,
    theta: float
) -> Dict[float, float]:
    n = sample.n
    k_theta = floor_index(n, theta)
    if theta < 2.0 / n or theta >= 1.0 - 1.0 / n or not 2 <= k_theta <= n - 2:
        raise ValueError(f'theta must lie in [2/N, 1 - 1/N) ({theta}, N={n})')
    sums = CovarianceSums(sample.values)
    profile = dict()
    for lam in profile_fractions(nu):
        # each window is centred by its own mean
        pre = sums.scatter(0, floor_index(k_theta, lam)) / (k_theta - 1)
        post = sums.scatter(k_theta, floor_index(n - k_theta, lam)) / (n - k_theta - 1)
        profile[lam] = integrate_sq_2d(sample.grid, pre - post)
    return profile


def cov_changepoint_test(
    sample: FunctionalSample,
    config: TestConfig,
    trim: float = DEFAULT_TRIM,
    theta: Optional[float] = None,
    nu_floor: float = NU_FLOOR
) -> Tuple[TestOutcome, ChangePointFit]:
    check_delta(config.delta)
    check_nu_floor(config.nu, nu_floor)
    if theta is None:
        fit = estimate_cov_changepoint(sample, trim)
    else:
        fit = ChangePointFit(
            theta_hat=float(theta),
            k_hat=floor_index(sample.n, theta),
            trim=trim,
            estimated=False
        )
    profile = cov_cp_profile(sample, config.nu, fit.theta_hat)
    normalizer = self_normalizer(profile, config.nu, config.normalizer_kind)
    result = outcome(
        'cov-changepoint', profile[1.0], normalizer, config, extras=fit.to_dict()
    )
    return result, fit
