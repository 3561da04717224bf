#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Any, Dict, Optional, Tuple
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
import numpy as np
from scipy.interpolate import splev
from func_core import Curve, FunctionalSample, Grid, floor_index
from utils.general import make_rng

logger = logging.getLogger(__name__)

# number of basis functions in the simulations
DEFAULT_DIMENSION = 21
# cubic B-splines
BSPLINE_DEGREE = 3
# induced spectral norm of the fMA(1) operator after rescaling
SPECTRAL_NORM_TARGET = 0.7
DEFAULT_KAPPA = 0.7
# discarded fAR(1) start-up iterations
BURN_IN = 100
# t5 draws times sqrt(3/5) have unit variance
T5_DF = 5
T5_SCALE = np.sqrt(3.0 / 5.0)
# sine/cosine pairs in the heavy-tailed Kraus process
KRAUS_TERMS = 10
FAMILIES = ('bspline', 'fourier')
SIGMA_PROFILES = ('inv_i_sq', 'geo', 'zero')
INNOVATIONS = ('gaussian', 't5')
DEPENDENCES = ('fma1', 'iid')
VARIANTS = (
    'iid_basis', 'fma1', 'far1', 'brownian_bridge',
    'heavy_t5_basis', 'kraus_t5', 'cov_scenario'
)
MEAN_KINDS = ('sin_sqrt2delta', 'parabola_a', 'zero')


@dataclass(frozen=True)
class BasisSpec:
    family: str = 'bspline'
    dimension: int = DEFAULT_DIMENSION
    grid: Grid = field(default_factory=Grid.equidistant)

    def __post_init__(self: BasisSpec) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f'unknown basis family: {self.family}')
        if self.dimension < 1:
            raise ValueError(f'basis dimension must be >= 1 ({self.dimension})')
        return


def _bspline_matrix(dimension: int, points: np.ndarray) -> np.ndarray:
    if dimension == 1:
        return np.ones((1, len(points)))
    # cubic unless there are too few functions for it
    degree = min(BSPLINE_DEGREE, dimension - 1)
    interior = np.linspace(0.0, 1.0, dimension - degree + 1)[1:-1]
    knots = np.concatenate([
        np.zeros(degree + 1), interior, np.ones(degree + 1)
    ])
    rows = list()
    for i in range(dimension):
        coefficients = np.zeros(len(knots))
        coefficients[i] = 1.0
        rows.append(splev(points, (knots, coefficients, degree)))
    return np.array(rows)


def fourier_matrix(dimension: int, points: np.ndarray) -> np.ndarray:
    rows = [np.ones(len(points))]
    for j in range(2, dimension + 1):
        if j % 2 == 0:
            rows.append(np.sqrt(2.0) * np.sin(j * np.pi * points))
        else:
            rows.append(np.sqrt(2.0) * np.cos((j - 1) * np.pi * points))
    return np.array(rows)


@lru_cache(maxsize=32)
def basis_matrix(basis: BasisSpec) -> np.ndarray:
    # (dimension, resolution): basis functions evaluated on the grid
    if basis.family == 'bspline':
        matrix = _bspline_matrix(basis.dimension, basis.grid.points)
    else:
        matrix = fourier_matrix(basis.dimension, basis.grid.points)
    matrix.flags.writeable = False
    return matrix


def sigma_squared(profile: str, dimension: int) -> np.ndarray:
    i = np.arange(1, dimension + 1, dtype=np.float64)
    if profile == 'inv_i_sq':
        return 1.0 / i ** 2
    elif profile == 'geo':
        return 1.2 ** (-2.0 * i)
    elif profile == 'zero':
        return np.zeros(dimension)
    raise ValueError(f'unknown sigma profile: {profile}')


def make_mean(kind: str, param: float, grid: Grid) -> Curve:
    t = grid.points
    if kind == 'sin_sqrt2delta':
        if param < 0:
            raise ValueError(f'delta must be >= 0 ({param})')
        return Curve(grid, np.sqrt(2.0 * param) * np.sin(2.0 * np.pi * t))
    elif kind == 'parabola_a':
        return Curve(grid, param * t * (1.0 - t))
    elif kind == 'zero':
        return Curve.zero(grid)
    raise ValueError(f'unknown mean kind: {kind}')


@dataclass(frozen=True)
class DgpSpec:
    variant: str
    n: int
    seed: int = 0
    basis: BasisSpec = field(default_factory=BasisSpec)
    sigma_profile: str = 'inv_i_sq'
    kappa: float = DEFAULT_KAPPA
    mean: Optional[Curve] = None
    # multiplier a of the second sample or the post-break segment
    scale: float = 1.0
    spectral_norm_target: float = SPECTRAL_NORM_TARGET
    burn_in: int = BURN_IN
    innovation: str = 'gaussian'
    dependence: str = 'fma1'
    n_y: Optional[int] = None

    def __post_init__(self: DgpSpec) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f'unknown process: {self.variant} (expected one of {VARIANTS})')
        if self.n < 1:
            raise ValueError(f'sample size must be >= 1 ({self.n})')
        if self.n_y is not None and self.n_y < 1:
            raise ValueError(f'second sample size must be >= 1 ({self.n_y})')
        if not self.spectral_norm_target > 0:
            raise ValueError(f'spectral norm target must be > 0 ({self.spectral_norm_target})')
        if self.variant == 'far1' and abs(self.kappa) >= 1.0:
            raise ValueError(f'fAR(1) needs |kappa| < 1 ({self.kappa})')
        if self.sigma_profile not in SIGMA_PROFILES:
            raise ValueError(f'unknown sigma profile: {self.sigma_profile}')
        if self.innovation not in INNOVATIONS:
            raise ValueError(f'unknown innovation law: {self.innovation}')
        if self.dependence not in DEPENDENCES:
            raise ValueError(f'unknown dependence: {self.dependence}')
        if self.burn_in < 0:
            raise ValueError(f'burn-in must be >= 0 ({self.burn_in})')
        if self.mean is not None and self.mean.grid != self.basis.grid:
            raise ValueError('mean curve and basis live on different grids')
        return

    @property
    def grid(self: DgpSpec) -> Grid:
        return self.basis.grid

    def to_dict(self: DgpSpec) -> Dict[str, Any]:
        return {
            'variant': self.variant,
            'n': self.n,
            'n_y': self.n_y,
            'seed': self.seed,
            'basis': {
                'family': self.basis.family,
                'dimension': self.basis.dimension,
                'resolution': self.basis.grid.resolution,
            },
            'sigma_profile': self.sigma_profile,
            'kappa': self.kappa,
            'scale': self.scale,
            'spectral_norm_target': self.spectral_norm_target,
            'burn_in': self.burn_in,
            'innovation': self.innovation,
            'dependence': self.dependence,
            'mean': None if self.mean is None else self.mean.values.tolist(),
        }


def _innovations(spec: DgpSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    # (count, dimension) coefficients with variance sigma_i^2
    dimension = spec.basis.dimension
    sd = np.sqrt(sigma_squared(spec.sigma_profile, dimension))
    if spec.innovation == 't5':
        return rng.standard_t(T5_DF, size=(count, dimension)) * T5_SCALE * sd
    return rng.standard_normal((count, dimension)) * sd


def _to_sample(spec: DgpSpec, coefficients: np.ndarray) -> FunctionalSample:
    values = coefficients @ basis_matrix(spec.basis)
    if spec.mean is not None:
        values = values + spec.mean.values
    return FunctionalSample(spec.grid, values)


def sample_iid_basis(spec: DgpSpec) -> FunctionalSample:
    rng = make_rng(spec.seed)
    return _to_sample(spec, _innovations(spec, rng, spec.n))


def draw_fma_operator(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    '''
    random fMA(1) operator on basis coefficients

    entries are N(0, (kappa sigma_i sigma_j)^2), then the matrix is rescaled
    to the target induced 2-norm; an all-zero draw stays zero
    '''
    dimension = spec.basis.dimension
    sd = np.sqrt(sigma_squared(spec.sigma_profile, dimension))
    theta = rng.standard_normal((dimension, dimension)) * abs(spec.kappa) * np.outer(sd, sd)
    spectral = np.linalg.norm(theta, 2)
    if spectral == 0.0:
        logger.warning('fMA(1) operator is zero; errors are iid')
        return theta
    return theta * (spec.spectral_norm_target / spectral)


def fma1_coefficients(
    spec: DgpSpec,
    rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    theta = draw_fma_operator(spec, rng)
    innovations = _innovations(spec, rng, spec.n + 1)
    # eps_j = eta_j + Theta eta_{j-1}, written for row vectors
    coefficients = innovations[1:] + innovations[:-1] @ theta.T
    return coefficients, theta


def sample_fma1(spec: DgpSpec) -> FunctionalSample:
    coefficients, _ = fma1_coefficients(spec, make_rng(spec.seed))
    return _to_sample(spec, coefficients)


def sample_far1(spec: DgpSpec) -> FunctionalSample:
    # eps_j = eta_j + kappa eps_{j-1}, started at zero
    if abs(spec.kappa) >= 1.0:
        raise ValueError(f'fAR(1) needs |kappa| < 1 ({spec.kappa})')
    rng = make_rng(spec.seed)
    innovations = _innovations(spec, rng, spec.burn_in + spec.n)
    coefficients = np.zeros_like(innovations)
    coefficients[0] = innovations[0]
    for period in range(1, len(innovations)):
        coefficients[period] = spec.kappa * coefficients[period - 1] + innovations[period]
    return _to_sample(spec, coefficients[spec.burn_in:])


def sample_brownian_bridge(
    n: int,
    grid: Grid,
    mean: Optional[Curve] = None,
    seed: int = 0
) -> FunctionalSample:
    rng = make_rng(seed)
    increments = rng.standard_normal((n, grid.resolution - 1)) * np.sqrt(np.diff(grid.points))
    motion = np.zeros((n, grid.resolution))
    np.cumsum(increments, axis=1, out=motion[:, 1:])
    bridge = motion - grid.points * motion[:, -1:]
    if mean is not None:
        bridge = bridge + mean.values
    return FunctionalSample(grid, bridge)


def sample_heavy_t5_basis(spec: DgpSpec) -> FunctionalSample:
    # coefficients sigma_i * sqrt(3/5) * t5, variance sigma_i^2
    return sample_iid_basis(replace(spec, innovation='t5'))


def _kraus_matrices(grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    k = np.arange(1, KRAUS_TERMS + 1)[:, np.newaxis]
    t = grid.points[np.newaxis, :]
    sines = k ** -1.5 * np.sqrt(2.0) * np.sin(2.0 * np.pi * k * t)
    cosines = 3.0 ** (-k / 2.0) * np.sqrt(2.0) * np.cos(2.0 * np.pi * k * t)
    return sines, cosines


def kraus_errors(n: int, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    sines, cosines = _kraus_matrices(grid)
    v = rng.standard_t(T5_DF, size=(n, KRAUS_TERMS)) * T5_SCALE
    w = rng.standard_t(T5_DF, size=(n, KRAUS_TERMS)) * T5_SCALE
    return (v @ sines + w @ cosines) / np.sqrt(KRAUS_TERMS)


def sample_kraus_t5(
    n: int,
    grid: Grid,
    seed: int = 0,
    scale: float = 1.0,
    mean: Optional[Curve] = None
) -> FunctionalSample:
    values = scale * kraus_errors(n, grid, make_rng(seed))
    if mean is not None:
        values = values + mean.values
    return FunctionalSample(grid, values)


def _cov_process(spec: DgpSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    # X_j = eta_j + kappa eta_{j-1} with a scalar kappa, or iid eta_j
    if spec.dependence == 'fma1':
        innovations = _innovations(spec, rng, count + 1)
        return innovations[1:] + spec.kappa * innovations[:-1]
    return _innovations(spec, rng, count)


def sample_cov_scenario(spec: DgpSpec) -> Tuple[FunctionalSample, FunctionalSample]:
    '''
    two independent samples whose covariances differ by the factor scale^2
    '''
    rng = make_rng(spec.seed)
    x = _cov_process(spec, rng, spec.n)
    y = spec.scale * _cov_process(spec, rng, spec.n if spec.n_y is None else spec.n_y)
    return _to_sample(spec, x), _to_sample(spec, y)


def cov_population_distance(
    sigma_profile: str,
    dimension: int,
    scale: float,
    kappa: float = DEFAULT_KAPPA,
    dependence: str = 'fma1'
) -> float:
    # squared Hilbert-Schmidt distance of the two covariance operators
    fourth = np.sum(sigma_squared(sigma_profile, dimension) ** 2)
    distance = (1.0 - scale ** 2) ** 2 * fourth
    if dependence == 'fma1':
        distance *= (1.0 + kappa ** 2) ** 2
    return float(distance)


def kraus_population_distance(scale: float) -> float:
    k = np.arange(1, KRAUS_TERMS + 1, dtype=np.float64)
    total = np.sum(k ** -6.0 + 3.0 ** (-2.0 * k)) / KRAUS_TERMS ** 2
    return float(total * (1.0 - scale ** 2) ** 2)


def sample(spec: DgpSpec) -> FunctionalSample:
    if spec.variant == 'iid_basis':
        return sample_iid_basis(spec)
    elif spec.variant == 'fma1':
        return sample_fma1(spec)
    elif spec.variant == 'far1':
        return sample_far1(spec)
    elif spec.variant == 'brownian_bridge':
        return sample_brownian_bridge(spec.n, spec.grid, spec.mean, spec.seed)
    elif spec.variant == 'heavy_t5_basis':
        return sample_heavy_t5_basis(spec)
    elif spec.variant == 'kraus_t5':
        return sample_kraus_t5(spec.n, spec.grid, spec.seed, spec.scale, spec.mean)
    raise ValueError(f'{spec.variant} yields two samples; use sample_cov_scenario')


def sample_mean_changepoint(
    spec: DgpSpec,
    theta0: float,
    jump: Curve,
    scale_after: float = 1.0
) -> FunctionalSample:
    '''
    mu + eta_i up to floor(theta0 N), mu + jump + scale_after * eta_i after

    the errors are one continuous stream drawn from spec without its mean
    '''
    errors = sample(replace(spec, mean=None)).values.copy()
    k0 = floor_index(spec.n, theta0)
    errors[k0:] = jump.values + scale_after * errors[k0:]
    if spec.mean is not None:
        errors = errors + spec.mean.values
    return FunctionalSample(spec.grid, errors)


def sample_cov_changepoint(spec: DgpSpec, theta0: float) -> FunctionalSample:
    # X'_j up to floor(theta0 N), scale * X'_j after
    values = _cov_process(spec, make_rng(spec.seed), spec.n) @ basis_matrix(spec.basis)
    k0 = floor_index(spec.n, theta0)
    values[k0:] = spec.scale * values[k0:]
    if spec.mean is not None:
        values = values + spec.mean.values
    return FunctionalSample(spec.grid, values)


def sample_dependent_pair(
    spec: DgpSpec,
    m: int,
    n: int,
    y_scale: float = 1.0,
    mean_x: Optional[Curve] = None,
    mean_y: Optional[Curve] = None
) -> Tuple[FunctionalSample, FunctionalSample]:
    # X_i = mu1 + eta_i, Y_i = mu2 + y_scale * eta_{m+i} from one error stream
    errors = sample(replace(spec, n=m + n, mean=None)).values
    x = errors[:m] if mean_x is None else errors[:m] + mean_x.values
    y = y_scale * errors[m:]
    if mean_y is not None:
        y = y + mean_y.values
    return FunctionalSample(spec.grid, x), FunctionalSample(spec.grid, y)
