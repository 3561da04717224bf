#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Optional
import logging
import numpy as np
from scipy.stats import norm
from func_core import Curve, FunctionalSample, Surface, check_same_grid, partial_sum
from mean_tests import TestOutcome, check_delta, decide, one_sample_statistic
import dgp

logger = logging.getLogger(__name__)


class LrvEstimate(object):
    def __init__(
        self: LrvEstimate,
        kernel_surface: Surface,
        bandwidth: int,
        kernel: str = 'bartlett',
        tau2: float = 0.0,
        tau2_truncated: bool = False
    ) -> None:
        self.kernel_surface = kernel_surface
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.tau2 = tau2
        # True when a negative estimate was set to 0
        self.tau2_truncated = tau2_truncated
        return

    def __repr__(self: LrvEstimate) -> str:
        return f'LrvEstimate(bandwidth={self.bandwidth}, tau2={self.tau2:.4g})'


def default_bandwidth(n: int) -> int:
    # floor(n^(1/3)) in integers
    h = int(round(n ** (1.0 / 3.0)))
    while h ** 3 > n:
        h -= 1
    while (h + 1) ** 3 <= n:
        h += 1
    return h


def bartlett_weights(bandwidth: int) -> np.ndarray:
    lags = np.arange(1, bandwidth + 1)
    return 1.0 - lags / (bandwidth + 1.0)


def longrun_kernel(sample: FunctionalSample, bandwidth: Optional[int] = None) -> Surface:
    '''
    Bartlett estimate of the long-run covariance kernel

    lag-l autocovariances use the divisor n at every lag
    '''
    n = sample.n
    if n < 2:
        raise ValueError(f'need at least two curves ({n})')
    h = default_bandwidth(n) if bandwidth is None else int(bandwidth)
    if h < 0 or h >= n:
        raise ValueError(f'bandwidth must lie in [0, n) ({h}, n={n})')
    residuals = sample.values - sample.values.mean(axis=0)
    kernel = residuals.T @ residuals / n
    for lag, weight in zip(range(1, h + 1), bartlett_weights(h)):
        gamma = residuals[:-lag].T @ residuals[lag:] / n
        kernel = kernel + weight * (gamma + gamma.T)
    # exact symmetry
    kernel = (kernel + kernel.T) / 2.0
    return Surface(sample.grid, kernel)


def _tau2_raw(sample: FunctionalSample, kernel_surface: Surface) -> float:
    grid = check_same_grid(sample.grid, kernel_surface.grid)
    weighted = grid.weights * partial_sum(sample, 1.0).values
    return float(4.0 * weighted @ kernel_surface.values @ weighted)


def tau2_hat(sample: FunctionalSample, kernel_surface: Surface) -> float:
    return max(0.0, _tau2_raw(sample, kernel_surface))


def estimate_lrv(sample: FunctionalSample, bandwidth: Optional[int] = None) -> LrvEstimate:
    surface = longrun_kernel(sample, bandwidth)
    raw = _tau2_raw(sample, surface)
    truncated = raw < 0.0
    if truncated:
        logger.warning(f'negative long-run variance estimate {raw:.3g} truncated to 0')
    return LrvEstimate(
        kernel_surface=surface,
        bandwidth=default_bandwidth(sample.n) if bandwidth is None else int(bandwidth),
        tau2=max(0.0, raw),
        tau2_truncated=truncated,
    )


def _lrv_outcome(
    test: str,
    sample: FunctionalSample,
    delta: float,
    alpha: float,
    tau: float,
    extras: dict
) -> TestOutcome:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f'alpha must lie in (0, 1) ({alpha})')
    if tau < 0.0:
        raise ValueError(f'tau must be >= 0 ({tau})')
    statistic = one_sample_statistic(sample)
    z = float(norm.ppf(1.0 - alpha))
    normalizer = tau / np.sqrt(sample.n)
    threshold, reject = decide(statistic, normalizer, delta, z)
    return TestOutcome(
        statistic=statistic,
        normalizer=float(normalizer),
        quantile_used=z,
        threshold=threshold,
        reject=reject,
        test=test,
        alpha=alpha,
        delta=delta,
        normalizer_kind='lrv',
        extras=extras,
    )


def lrv_one_sample_test(
    sample: FunctionalSample,
    delta: float,
    alpha: float,
    bandwidth: Optional[int] = None
) -> TestOutcome:
    # rejects when T > delta + z_{1-alpha} * tau_hat / sqrt(n)
    check_delta(delta)
    estimate = estimate_lrv(sample, bandwidth)
    extras = {
        'bandwidth': estimate.bandwidth,
        'kernel': estimate.kernel,
        'tau2': estimate.tau2,
        'tau2_truncated': estimate.tau2_truncated,
    }
    return _lrv_outcome(
        'lrv-one-sample', sample, delta, alpha, float(np.sqrt(estimate.tau2)), extras
    )


def lrv_one_sample_test_known_tau(
    sample: FunctionalSample,
    delta: float,
    alpha: float,
    tau: float
) -> TestOutcome:
    check_delta(delta)
    extras = {'tau2': tau ** 2, 'tau2_truncated': False}
    return _lrv_outcome('lrv-known-tau', sample, delta, alpha, float(tau), extras)


def far1_tau2(
    mean: Curve,
    kappa: float,
    dimension: int = dgp.DEFAULT_DIMENSION,
    sigma_profile: str = 'inv_i_sq'
) -> float:
    '''
    long-run variance of the one-sample statistic under fAR(1) errors

    4 / (1 - kappa)^2 * sum_i sigma_i^2 <mu, b_i>^2 in the Fourier basis
    '''
    if abs(kappa) >= 1.0:
        raise ValueError(f'fAR(1) needs |kappa| < 1 ({kappa})')
    basis = dgp.BasisSpec('fourier', dimension, mean.grid)
    coefficients = dgp.basis_matrix(basis) @ (mean.grid.weights * mean.values)
    variances = dgp.sigma_squared(sigma_profile, dimension)
    return float(4.0 / (1.0 - kappa) ** 2 * np.sum(variances * coefficients ** 2))
