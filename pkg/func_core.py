#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Dict, List, Mapping, Optional, Sequence
import math
import logging
import numpy as np
import pandas as pd
import yaml
from utils.general import DataError, get_hash

logger = logging.getLogger(__name__)

# default number of grid points on [0, 1]
DEFAULT_RESOLUTION = 100
# relative tolerance for equidistant spacing
GRID_TOLERANCE = 1e-12
# CSV headers within this distance of the canonical grid are snapped to it
HEADER_SNAP = 1e-6
# weights of a measure must sum to one within this tolerance
NU_TOLERANCE = 1e-12
# default measure: uniform on {i/20 : i = 1..19}
DEFAULT_NU_ATOMS = 19
# products this many ulps from an integer count as that integer
FLOOR_ULPS = 8
EPS = float(np.finfo(np.float64).eps)
NORMALIZER_KINDS = ('standard', 'sup', 'abs')
LONG_COLUMNS = ['curve_id', 't', 'value']


def near_integer(value: float) -> Optional[int]:
    # the integer within FLOOR_ULPS ulps of value, if there is one
    nearest = round(value)
    if abs(value - nearest) <= FLOOR_ULPS * EPS * max(1.0, abs(value)):
        return int(nearest)
    return None


def floor_index(count: int, fraction: float) -> int:
    '''
    exact floor of count * fraction

    products within a few ulps of an integer are that integer, so
    20 * 0.35 floors to 7 and not to 6; anything else is floored as is
    '''
    product = count * float(fraction)
    nearest = near_integer(product)
    return math.floor(product) if nearest is None else nearest


class Grid(object):
    def __init__(self: Grid, points: Sequence[float]) -> None:
        points = np.array(points, dtype=np.float64)
        if points.ndim != 1 or len(points) < 2:
            raise ValueError('a grid needs at least two points')
        if points[0] != 0.0 or points[-1] != 1.0:
            raise ValueError(
                f'grid must start at 0 and end at 1 ({points[0]}, {points[-1]})'
            )
        steps = np.diff(points)
        if np.any(steps <= 0):
            raise ValueError('grid points must be strictly increasing')
        spacing = 1.0 / (len(points) - 1)
        slack = max(GRID_TOLERANCE * spacing, 8 * np.finfo(np.float64).eps)
        if np.max(np.abs(steps - spacing)) > slack:
            raise ValueError('grid points must be equidistant')
        points.flags.writeable = False
        self.points = points
        self.resolution = len(points)
        self.spacing = spacing
        # trapezoidal quadrature weights
        weights = np.full(self.resolution, spacing)
        weights[0] = weights[-1] = spacing / 2.0
        weights.flags.writeable = False
        self.weights = weights
        return

    @classmethod
    def equidistant(cls, resolution: int = DEFAULT_RESOLUTION) -> Grid:
        if resolution < 2:
            raise ValueError(f'resolution must be >= 2 ({resolution})')
        return cls(np.linspace(0.0, 1.0, resolution))

    @classmethod
    def from_header(cls, points: Sequence[float]) -> Grid:
        points = np.asarray(points, dtype=np.float64)
        if len(points) >= 2:
            canonical = np.linspace(0.0, 1.0, len(points))
            if np.max(np.abs(points - canonical)) < HEADER_SNAP:
                return cls(canonical)
        return cls(points)

    def __eq__(self: Grid, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.resolution == other.resolution and
            bool(np.array_equal(self.points, other.points))
        )

    def __hash__(self: Grid) -> int:
        return hash((self.resolution, self.points.tobytes()))

    def __repr__(self: Grid) -> str:
        return f'Grid(resolution={self.resolution})'


def check_same_grid(*grids: Grid) -> Grid:
    first = grids[0]
    for grid in grids[1:]:
        if grid != first:
            raise DataError(f'grid mismatch: {first} vs {grid}')
    return first


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DataError('values must be finite')
    values.flags.writeable = False
    return values


class Curve(object):
    def __init__(self: Curve, grid: Grid, values: Sequence[float]) -> None:
        values = _frozen(values)
        if values.shape != (grid.resolution,):
            raise DataError(
                f'curve has {values.shape} values on a grid of {grid.resolution}'
            )
        self.grid = grid
        self.values = values
        return

    @classmethod
    def constant(cls, grid: Grid, value: float) -> Curve:
        return cls(grid, np.full(grid.resolution, float(value)))

    @classmethod
    def zero(cls, grid: Grid) -> Curve:
        return cls.constant(grid, 0.0)

    def __sub__(self: Curve, other: Curve) -> Curve:
        check_same_grid(self.grid, other.grid)
        return Curve(self.grid, self.values - other.values)

    def __repr__(self: Curve) -> str:
        return f'Curve({self.grid!r})'


class Surface(object):
    def __init__(self: Surface, grid: Grid, values: np.ndarray) -> None:
        values = _frozen(values)
        if values.shape != (grid.resolution, grid.resolution):
            raise DataError(
                f'surface has shape {values.shape} on a grid of {grid.resolution}'
            )
        self.grid = grid
        self.values = values
        return

    def __repr__(self: Surface) -> str:
        return f'Surface({self.grid!r})'


class FunctionalSample(object):
    '''
    n curves on one shared grid, stored as an (n, resolution) array
    '''
    def __init__(self: FunctionalSample, grid: Grid, values: np.ndarray) -> None:
        values = _frozen(values)
        if values.ndim != 2 or values.shape[1] != grid.resolution:
            raise DataError(
                f'sample of shape {values.shape} does not fit {grid}'
            )
        if values.shape[0] < 1:
            raise DataError('a sample needs at least one curve')
        self.grid = grid
        self.values = values
        self.n = values.shape[0]
        return

    def __len__(self: FunctionalSample) -> int:
        return self.n

    def __getitem__(self: FunctionalSample, index: int) -> Curve:
        return Curve(self.grid, self.values[index])

    def scaled(self: FunctionalSample, factor: float) -> FunctionalSample:
        return FunctionalSample(self.grid, self.values * float(factor))

    def shifted(self: FunctionalSample, curve: Curve) -> FunctionalSample:
        check_same_grid(self.grid, curve.grid)
        return FunctionalSample(self.grid, self.values + curve.values)

    def __repr__(self: FunctionalSample) -> str:
        return f'FunctionalSample(n={self.n}, {self.grid!r})'


class NuMeasure(object):
    '''
    finite discrete probability measure on (0, 1)
    '''
    def __init__(
        self: NuMeasure,
        support: Sequence[float],
        weights: Sequence[float]
    ) -> None:
        support = np.array(support, dtype=np.float64)
        weights = np.array(weights, dtype=np.float64)
        if support.ndim != 1 or len(support) == 0:
            raise ValueError('measure needs at least one atom')
        if support.shape != weights.shape:
            raise ValueError('support and weights differ in length')
        if np.any(support <= 0.0) or np.any(support >= 1.0):
            raise ValueError('support must lie strictly inside (0, 1)')
        if np.any(np.diff(support) <= 0):
            raise ValueError('support must be strictly increasing')
        if np.any(weights < 0):
            raise ValueError('weights must be nonnegative')
        if abs(weights.sum() - 1.0) > NU_TOLERANCE:
            raise ValueError(f'weights sum to {weights.sum()}, not 1')
        support.flags.writeable = False
        weights.flags.writeable = False
        self.support = support
        self.weights = weights
        return

    @classmethod
    def uniform(cls, atoms: int = DEFAULT_NU_ATOMS) -> NuMeasure:
        # uniform on {i/(atoms+1) : i = 1..atoms}
        if atoms < 1:
            raise ValueError(f'number of atoms must be >= 1 ({atoms})')
        support = [i / (atoms + 1) for i in range(1, atoms + 1)]
        return cls(support, np.full(atoms, 1.0 / atoms))

    @classmethod
    def point_mass(cls, atom: float) -> NuMeasure:
        return cls([atom], [1.0])

    @classmethod
    def from_pairs(cls, support: Sequence[float], weights: Sequence[float]) -> NuMeasure:
        # unsorted pairs are sorted jointly
        order = np.argsort(np.asarray(support, dtype=np.float64), kind='stable')
        return cls(
            np.asarray(support, dtype=np.float64)[order],
            np.asarray(weights, dtype=np.float64)[order]
        )

    @classmethod
    def from_file(cls, path: str) -> NuMeasure:
        # JSON is a subset of YAML
        with open(path, 'rt') as rf:
            document = yaml.safe_load(rf)
        if not isinstance(document, dict) or 'support' not in document:
            raise ValueError(f'{path}: expected a mapping with support and weights')
        weights = document.get('weights')
        if weights is None:
            weights = [1.0 / len(document['support'])] * len(document['support'])
        return cls.from_pairs(document['support'], weights)

    @property
    def floor(self: NuMeasure) -> float:
        return float(self.support[0])

    def to_dict(self: NuMeasure) -> Dict[str, List[float]]:
        return {
            'support': [float(x) for x in self.support],
            'weights': [float(x) for x in self.weights],
        }

    def digest(self: NuMeasure) -> str:
        return get_hash(self.to_dict())

    def __eq__(self: NuMeasure, other: object) -> bool:
        if not isinstance(other, NuMeasure):
            return NotImplemented
        return (
            bool(np.array_equal(self.support, other.support)) and
            bool(np.array_equal(self.weights, other.weights))
        )

    def __hash__(self: NuMeasure) -> int:
        return hash(self.digest())

    def __repr__(self: NuMeasure) -> str:
        return f'NuMeasure(atoms={len(self.support)}, digest={self.digest()})'


def l2_inner(f: Curve, g: Curve) -> float:
    grid = check_same_grid(f.grid, g.grid)
    return float(np.sum(grid.weights * f.values * g.values))


def l2_norm_sq(f: Curve) -> float:
    return l2_inner(f, f)


def integrate_sq_2d(grid: Grid, values: np.ndarray) -> float:
    # tensor-product trapezoid of values^2 over [0, 1]^2
    return float(grid.weights @ (values * values) @ grid.weights)


def partial_sum_values(values: np.ndarray, count: int, divisor: int) -> np.ndarray:
    # (1/divisor) * sum of the first count rows
    if count <= 0:
        return np.zeros(values.shape[1])
    return values[:count].sum(axis=0) / divisor


def partial_sum(sample: FunctionalSample, lam: float) -> Curve:
    if lam < 0.0 or lam > 1.0:
        raise ValueError(f'lambda must lie in [0, 1] ({lam})')
    count = floor_index(sample.n, lam)
    return Curve(sample.grid, partial_sum_values(sample.values, count, sample.n))


def range_mean(sample: FunctionalSample, from_index: int, to_index: int) -> Curve:
    # one-based, inclusive
    if not 1 <= from_index <= to_index <= sample.n:
        raise ValueError(
            f'range {from_index}..{to_index} outside 1..{sample.n}'
        )
    values = sample.values[from_index - 1:]
    count = to_index - from_index + 1
    return Curve(sample.grid, partial_sum_values(values, count, count))


def normalize_profile(
    values: Sequence[float],
    total: float,
    nu: NuMeasure,
    kind: str = 'standard'
) -> float:
    '''
    aggregate the deviations p(lambda_i) - lambda_i^2 p(1)

    values are aligned with nu.support, total is p(1)
    '''
    values = np.asarray(values, dtype=np.float64)
    deviations = values - nu.support ** 2 * total
    if kind == 'standard':
        return float(np.sqrt(np.sum(nu.weights * deviations ** 2)))
    elif kind == 'sup':
        # essential supremum: only atoms carrying mass count
        return float(np.max(np.abs(deviations[nu.weights > 0])))
    elif kind == 'abs':
        return float(np.sum(nu.weights * np.abs(deviations)))
    raise ValueError(f'unknown normalizer kind: {kind}')


def _lookup(profile: Mapping[float, float], lam: float) -> float:
    if lam in profile:
        return float(profile[lam])
    for key, value in profile.items():
        if abs(key - lam) <= 1e-12:
            return float(value)
    raise ValueError(f'profile has no value at lambda={lam}')


def self_normalizer(
    profile: Mapping[float, float],
    nu: NuMeasure,
    kind: str = 'standard'
) -> float:
    values = [_lookup(profile, lam) for lam in nu.support]
    return normalize_profile(values, _lookup(profile, 1.0), nu, kind)


def _parse_long(frame: pd.DataFrame, path: str) -> FunctionalSample:
    numeric = frame[['t', 'value']].apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna().any(axis=1)
    if bad.any():
        line = int(np.flatnonzero(bad.values)[0]) + 2
        raise DataError(f'{path}: line {line}: non-numeric t or value')
    frame = frame.assign(t=numeric['t'], value=numeric['value'])
    table = frame.pivot_table(
        index='curve_id', columns='t', values='value', aggfunc='first', sort=False
    )
    if table.isna().any().any():
        missing = list(table.index[table.isna().any(axis=1)])
        raise DataError(f'{path}: curves {missing} miss grid points')
    table = table.reindex(sorted(table.columns), axis=1)
    grid = Grid.from_header(list(table.columns))
    return FunctionalSample(grid, table.to_numpy(dtype=np.float64))


def read_curves(path: str) -> FunctionalSample:
    '''
    read a curve CSV

    canonical layout: header row of grid points, one curve per row;
    long layout (curve_id,t,value) is pivoted onto its grid
    '''
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f'{path}: {e}')
    columns = [str(c).strip() for c in frame.columns]
    if columns == LONG_COLUMNS:
        frame.columns = columns
        return _parse_long(frame, path)
    try:
        points = [float(c) for c in columns]
    except ValueError:
        raise DataError(f'{path}: line 1: header must hold grid points')
    try:
        grid = Grid.from_header(points)
    except ValueError as e:
        raise DataError(f'{path}: line 1: {e}')
    numeric = frame.apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna().any(axis=1) | ~np.isfinite(numeric.to_numpy()).all(axis=1)
    if bad.any():
        line = int(np.flatnonzero(bad.values)[0]) + 2
        raise DataError(f'{path}: line {line}: missing or non-numeric value')
    if len(numeric) == 0:
        raise DataError(f'{path}: no curves')
    return FunctionalSample(grid, numeric.to_numpy(dtype=np.float64))


def write_curves(sample: FunctionalSample, path: str) -> None:
    columns = [format(p, '.17g') for p in sample.grid.points]
    frame = pd.DataFrame(sample.values, columns=columns)
    frame.to_csv(path, index=False, float_format='%.17g')
    return
