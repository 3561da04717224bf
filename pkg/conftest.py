#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Callable, Dict, Sequence
import os
import sys
import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from func_core import FunctionalSample, Grid, NuMeasure  # noqa: E402
from pivotal import PivotalQuantiles, build_quantile_table  # noqa: E402

# upper quantiles of W for nu uniform on {i/20}, as tabulated for the method
TABULATED_W19 = {0.90: 7.619, 0.95: 10.530, 0.99: 16.081}


def symmetric_table(upper: Dict[float, float]) -> Dict[float, float]:
    table = dict(upper)
    for p, q in upper.items():
        table[round(1.0 - p, 12)] = -q
    return table


@pytest.fixture(scope='session')
def grid() -> Grid:
    return Grid.equidistant(100)


@pytest.fixture(scope='session')
def constant_sample(grid: Grid) -> Callable[[Sequence[float]], FunctionalSample]:
    # curve j is constant at levels[j]
    def _make(levels: Sequence[float]) -> FunctionalSample:
        levels = np.asarray(levels, dtype=np.float64)
        return FunctionalSample(grid, np.outer(levels, np.ones(grid.resolution)))
    return _make


@pytest.fixture(scope='session')
def nu19() -> NuMeasure:
    return NuMeasure.uniform(19)


@pytest.fixture(scope='session')
def tabulated_w(nu19: NuMeasure) -> PivotalQuantiles:
    return PivotalQuantiles(
        kind='W', nu=nu19, replications=1000, bm_steps=2000, seed=42,
        table=symmetric_table(TABULATED_W19)
    )


@pytest.fixture(scope='session')
def fixed_table() -> Callable[..., PivotalQuantiles]:
    # hand-made table for any measure and pivot kind
    def _make(nu: NuMeasure, kind: str = 'W', q: float = 5.0) -> PivotalQuantiles:
        return PivotalQuantiles(
            kind=kind, nu=nu, replications=1000, bm_steps=2000, seed=42,
            table=symmetric_table({0.90: q * 0.7, 0.95: q, 0.99: q * 1.5})
        )
    return _make


@pytest.fixture(scope='session')
def cache_dir(tmp_path_factory: pytest.TempPathFactory) -> str:
    return str(tmp_path_factory.mktemp('quantiles'))


@pytest.fixture(scope='session')
def w_table_small(nu19: NuMeasure, cache_dir: str) -> PivotalQuantiles:
    # 400 steps put every atom i/20 on the Brownian grid
    return build_quantile_table(
        'W', nu19, replications=20000, bm_steps=400, seed=42, cache_dir=cache_dir
    )


@pytest.fixture(scope='session')
def w_table_full(nu19: NuMeasure, cache_dir: str) -> PivotalQuantiles:
    return build_quantile_table(
        'W', nu19, replications=100000, bm_steps=2000, seed=42, cache_dir=cache_dir
    )
