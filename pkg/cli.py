#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Any, Callable, List, Optional, Sequence, Tuple
import functools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
import click
import numpy as np
import pandas as pd
import dgp
import harness
from func_core import (
    DEFAULT_NU_ATOMS, DEFAULT_RESOLUTION, NORMALIZER_KINDS,
    FunctionalSample, Grid, NuMeasure, read_curves, write_curves
)
from mean_tests import (
    TestConfig, TestOutcome, check_delta, decision_grid,
    one_sample_equivalence_test, one_sample_test,
    two_sample_equivalence_test, two_sample_test
)
from changepoint import DATA_TRIM, DEFAULT_TRIM, MultiCpConfig, changepoint_test, multi_cp_l2_test
from cov_tests import cov_changepoint_test, cov_two_sample_test
from longrun import lrv_one_sample_test
from pivotal import (
    DEFAULT_BM_STEPS, DEFAULT_PROBABILITIES, DEFAULT_REPLICATIONS, DEFAULT_SEED,
    PIVOT_KINDS, CACHE_ENV, build_quantile_table, cache_path, get_quantiles,
    pivot_kind
)
from utils.general import (
    RNG_ALGORITHM, DataError, PreconditionError,
    colorstr, package_versions, set_logging
)

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_PRECONDITION = 4
TEST_KINDS = (
    'one-sample', 'one-sample-equivalence', 'two-sample', 'two-sample-equivalence',
    'changepoint', 'multi-cp', 'cov-two-sample', 'cov-changepoint', 'lrv-one-sample'
)
# tests that read a second curve file
TWO_SAMPLE_KINDS = ('two-sample', 'two-sample-equivalence', 'cov-two-sample')
# Fourier functions used to smooth raw daily series
DEFAULT_BASIS_SIZE = 49
RAW_COLUMNS = ['unit_id', 'position', 'value']
DEFAULT_LEVELS = (0.99, 0.95, 0.90)


def _handle_errors(func: Callable) -> Callable:
    # exit codes: 2 usage, 3 data, 4 mathematical precondition
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except PreconditionError as e:
            click.echo(colorstr('red', 'precondition: ') + str(e), err=True)
            sys.exit(EXIT_PRECONDITION)
        except DataError as e:
            click.echo(colorstr('red', 'data: ') + str(e), err=True)
            sys.exit(EXIT_DATA)
        except ValueError as e:
            click.echo(colorstr('red', 'error: ') + str(e), err=True)
            sys.exit(EXIT_USAGE)
    return wrapper


def _nu(nu_atoms: int, nu_file: Optional[str]) -> NuMeasure:
    if nu_file is not None:
        return NuMeasure.from_file(nu_file)
    return NuMeasure.uniform(nu_atoms)


def _echo_json(document: Any, out: Optional[str]) -> None:
    text = json.dumps(document, indent=2, default=float)
    if out is None:
        click.echo(text)
    else:
        with open(out, 'wt') as wf:
            wf.write(text + '\n')
        click.echo(colorstr('test: ') + f'result written to {out}')
    return


def _load_quantiles(
    normalizer_kind: str,
    nu: NuMeasure,
    alphas: Sequence[float],
    reps: int,
    bm_steps: int,
    seed: int,
    cache_dir: Optional[str],
    workers: int
):
    kind = pivot_kind(normalizer_kind)
    if not cache_path(kind, nu, reps, bm_steps, seed, cache_dir).exists():
        click.echo(
            colorstr('quantiles: ') +
            f'no cached {kind} table, simulating {reps} draws (one-off)',
            err=True
        )
    return get_quantiles(
        normalizer_kind, nu, alphas, reps, bm_steps, seed,
        cache_dir=cache_dir, workers=workers, progress=False
    )


@click.group()
@click.option('--verbose/--quiet', is_flag=True, default=True)
def main(verbose: bool) -> None:
    set_logging(verbose)
    return


@main.command(name='quantiles')
@click.option('--dist', type=click.Choice(PIVOT_KINDS), default='W')
@click.option('--nu-atoms', type=int, default=DEFAULT_NU_ATOMS)
@click.option('--nu-file', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--reps', type=int, default=DEFAULT_REPLICATIONS)
@click.option('--bm-steps', type=int, default=DEFAULT_BM_STEPS)
@click.option('--seed', type=int, default=DEFAULT_SEED)
@click.option('--prob', type=float, multiple=True)
@click.option('--workers', type=int, default=1)
@click.option('--cache-dir', type=str, envvar=CACHE_ENV, default=None)
@click.option('--no-cache', is_flag=True, default=False)
@_handle_errors
def cmd_quantiles(
    dist: str,
    nu_atoms: int,
    nu_file: Optional[str],
    reps: int,
    bm_steps: int,
    seed: int,
    prob: Tuple[float, ...],
    workers: int,
    cache_dir: Optional[str],
    no_cache: bool
) -> None:
    '''simulate (or read from the cache) quantiles of W, W* or W**'''
    nu = _nu(nu_atoms, nu_file)
    probabilities = prob if len(prob) > 0 else DEFAULT_PROBABILITIES
    table = build_quantile_table(
        dist, nu, probabilities, reps, bm_steps, seed,
        cache_dir=cache_dir, use_cache=not no_cache, workers=workers, progress=True
    )
    click.echo(colorstr('quantiles: ') + f'{dist}, {nu}, {reps} replications, seed {seed}')
    for p in sorted(float(p) for p in probabilities):
        click.echo(f'{p:6.3f} {table.get(p):10.4f}')
    return


def _run_test(
    kind: str,
    x: FunctionalSample,
    y: Optional[FunctionalSample],
    delta: float,
    alpha: float,
    nu: NuMeasure,
    normalizer: str,
    trim: float,
    theta: Optional[float],
    k_breaks: int,
    quantile_options: dict
) -> TestOutcome:
    if kind == 'lrv-one-sample':
        return lrv_one_sample_test(x, delta, alpha)
    if kind == 'multi-cp':
        normalizer = 'standard'
    table = _load_quantiles(normalizer, nu, (alpha,), **quantile_options)
    if kind == 'multi-cp':
        config = MultiCpConfig(k_breaks, delta, alpha, nu, table, trim)
        return multi_cp_l2_test(x, config)
    config = TestConfig(delta, alpha, nu, table, normalizer)
    if kind == 'one-sample':
        return one_sample_test(x, config)
    elif kind == 'one-sample-equivalence':
        return one_sample_equivalence_test(x, config)
    elif kind == 'two-sample':
        return two_sample_test(x, y, config)
    elif kind == 'two-sample-equivalence':
        return two_sample_equivalence_test(x, y, config)
    elif kind == 'changepoint':
        return changepoint_test(x, config, trim, theta)[0]
    elif kind == 'cov-two-sample':
        return cov_two_sample_test(x, y, config)
    return cov_changepoint_test(x, config, trim, theta)[0]


@main.command(name='test')
@click.option('--kind', type=click.Choice(TEST_KINDS), required=True)
@click.option('--x', 'x_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--y', 'y_path', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--delta', type=float, required=True)
@click.option('--alpha', type=float, default=0.05)
@click.option('--nu-atoms', type=int, default=DEFAULT_NU_ATOMS)
@click.option('--nu-file', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--normalizer', type=click.Choice(NORMALIZER_KINDS), default='standard')
@click.option('--trim', type=float, default=DEFAULT_TRIM, help='change-point search range [trim, 1 - trim]')
@click.option('--data-trim', is_flag=True, help=f'trim {DATA_TRIM} for short real-data series (overrides --trim)')
@click.option('--theta', type=float, default=None)
@click.option('--k-breaks', type=int, default=1)
@click.option('--reps', type=int, default=DEFAULT_REPLICATIONS)
@click.option('--bm-steps', type=int, default=DEFAULT_BM_STEPS)
@click.option('--seed', type=int, default=DEFAULT_SEED)
@click.option('--workers', type=int, default=1)
@click.option('--cache-dir', type=str, envvar=CACHE_ENV, default=None)
@click.option('--out', type=str, default=None)
@_handle_errors
def cmd_test(
    kind: str,
    x_path: str,
    y_path: Optional[str],
    delta: float,
    alpha: float,
    nu_atoms: int,
    nu_file: Optional[str],
    normalizer: str,
    trim: float,
    data_trim: bool,
    theta: Optional[float],
    k_breaks: int,
    reps: int,
    bm_steps: int,
    seed: int,
    workers: int,
    cache_dir: Optional[str],
    out: Optional[str]
) -> None:
    '''run a relevant-hypothesis test on curve CSV files (exit 0 whatever the decision)'''
    if kind in TWO_SAMPLE_KINDS and y_path is None:
        raise click.UsageError(f'{kind} needs --y')
    check_delta(delta)
    nu = _nu(nu_atoms, nu_file)
    if data_trim:
        trim = DATA_TRIM
    x = read_curves(x_path)
    y = None if y_path is None else read_curves(y_path)
    result = _run_test(
        kind, x, y, delta, alpha, nu, normalizer, trim, theta, k_breaks,
        dict(reps=reps, bm_steps=bm_steps, seed=seed, cache_dir=cache_dir, workers=workers)
    )
    _echo_json(result.to_dict(), out)
    return


def _read_raw(path: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={'unit_id': str}, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f'{path}: {e}')
    if [str(c).strip() for c in frame.columns] != RAW_COLUMNS:
        raise DataError(f'{path}: line 1: expected columns {",".join(RAW_COLUMNS)}')
    numeric = frame[['position', 'value']].apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna().any(axis=1) | (numeric['position'] < 0) | (numeric['position'] > 1)
    if bad.any():
        line = int(np.flatnonzero(bad.values)[0]) + 2
        raise DataError(f'{path}: line {line}: position must be a number in [0, 1]')
    return frame.assign(position=numeric['position'], value=numeric['value'])


def project_units(
    frame: pd.DataFrame,
    basis_size: int = DEFAULT_BASIS_SIZE,
    resolution: int = DEFAULT_RESOLUTION
) -> FunctionalSample:
    '''
    least-squares fit of each unit's series on the first basis_size Fourier
    functions, evaluated on the equidistant grid
    '''
    if basis_size < 1:
        raise ValueError(f'basis size must be >= 1 ({basis_size})')
    counts = frame.groupby('unit_id', sort=False).size()
    sparse = [str(u) for u in counts.index[counts < basis_size]]
    if len(sparse) > 0:
        raise DataError(
            f'units with fewer than {basis_size} observations: {", ".join(sparse)}'
        )
    grid = Grid.equidistant(resolution)
    on_grid = dgp.fourier_matrix(basis_size, grid.points)
    curves = list()
    for unit, group in frame.groupby('unit_id', sort=False):
        design = dgp.fourier_matrix(basis_size, group['position'].to_numpy()).T
        coefficients, *_ = np.linalg.lstsq(design, group['value'].to_numpy(), rcond=None)
        curves.append(coefficients @ on_grid)
        logger.debug(f'unit {unit}: {len(group)} observations')
    return FunctionalSample(grid, np.array(curves))


def identity_units(frame: pd.DataFrame) -> FunctionalSample:
    # grid-native data: the positions are the grid
    table = frame.pivot_table(
        index='unit_id', columns='position', values='value', aggfunc='first', sort=False
    )
    if table.isna().any().any():
        missing = [str(u) for u in table.index[table.isna().any(axis=1)]]
        raise DataError(f'units {", ".join(missing)} miss grid points')
    table = table.reindex(sorted(table.columns), axis=1)
    grid = Grid.from_header(list(table.columns))
    return FunctionalSample(grid, table.to_numpy(dtype=np.float64))


@main.command(name='ingest')
@click.option('--input', 'input_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--output', type=str, required=True)
@click.option('--basis-size', type=int, default=DEFAULT_BASIS_SIZE)
@click.option('--resolution', type=int, default=DEFAULT_RESOLUTION)
@click.option('--identity', is_flag=True, default=False)
@_handle_errors
def cmd_ingest(
    input_path: str,
    output: str,
    basis_size: int,
    resolution: int,
    identity: bool
) -> None:
    '''turn a long raw CSV (unit_id, position, value) into a curve CSV'''
    frame = _read_raw(input_path)
    if identity:
        sample = identity_units(frame)
    else:
        sample = project_units(frame, basis_size, resolution)
    write_curves(sample, output)
    click.echo(colorstr('ingest: ') + f'{sample.n} curves on {sample.grid} -> {output}')
    return


@main.command(name='simulate')
@click.option('--dgp', 'variant', type=click.Choice(dgp.VARIANTS), required=True)
@click.option('--n', type=int, required=True)
@click.option('--n-y', type=int, default=None)
@click.option('--seed', type=int, default=0)
@click.option('--resolution', type=int, default=DEFAULT_RESOLUTION)
@click.option('--basis', type=click.Choice(dgp.FAMILIES), default='bspline')
@click.option('--dimension', type=int, default=dgp.DEFAULT_DIMENSION)
@click.option('--sigma', type=click.Choice(dgp.SIGMA_PROFILES), default='inv_i_sq')
@click.option('--kappa', type=float, default=dgp.DEFAULT_KAPPA)
@click.option('--scale', type=float, default=1.0)
@click.option('--innovation', type=click.Choice(dgp.INNOVATIONS), default='gaussian')
@click.option('--dependence', type=click.Choice(dgp.DEPENDENCES), default='fma1')
@click.option('--mean-kind', type=click.Choice(dgp.MEAN_KINDS), default='zero')
@click.option('--mean-param', type=float, default=0.0)
@click.option('--output', type=str, default='sample.csv')
@_handle_errors
def cmd_simulate(
    variant: str,
    n: int,
    n_y: Optional[int],
    seed: int,
    resolution: int,
    basis: str,
    dimension: int,
    sigma: str,
    kappa: float,
    scale: float,
    innovation: str,
    dependence: str,
    mean_kind: str,
    mean_param: float,
    output: str
) -> None:
    '''draw curves from a data-generating process into a curve CSV'''
    grid = Grid.equidistant(resolution)
    spec = dgp.DgpSpec(
        variant=variant,
        n=n,
        n_y=n_y,
        seed=seed,
        basis=dgp.BasisSpec(basis, dimension, grid),
        sigma_profile=sigma,
        kappa=kappa,
        mean=None if mean_kind == 'zero' else dgp.make_mean(mean_kind, mean_param, grid),
        scale=scale,
        innovation=innovation,
        dependence=dependence,
    )
    paths: List[Path] = [Path(output)]
    if variant == 'cov_scenario':
        x, y = dgp.sample_cov_scenario(spec)
        paths.append(paths[0].with_name(f'{paths[0].stem}_y{paths[0].suffix}'))
        write_curves(x, str(paths[0]))
        write_curves(y, str(paths[1]))
    else:
        write_curves(dgp.sample(spec), str(paths[0]))
    sidecar = paths[0].with_suffix('.json')
    with open(sidecar, 'wt') as wf:
        json.dump({
            'dgp': spec.to_dict(),
            'rng_algorithm': RNG_ALGORITHM,
            'outputs': [str(p) for p in paths],
            'versions': package_versions(),
        }, wf, indent=2)
    click.echo(colorstr('simulate: ') + ', '.join(str(p) for p in paths))
    return


@main.command(name='experiment')
@click.option('--scenario', type=str, required=True)
@click.option('--scenarios', 'scenario_file', type=click.Path(exists=True, dir_okay=False),
              default=harness.SCENARIO_FILE)
@click.option('--reps', type=int, default=None)
@click.option('--ci', is_flag=True, default=False)
@click.option('--seed', type=int, default=None)
@click.option('--quantile-reps', type=int, default=None)
@click.option('--workers', type=int, default=1)
@click.option('--cache-dir', type=str, envvar=CACHE_ENV, default=None)
@click.option('--out-dir', type=str, default='runs')
@_handle_errors
def cmd_experiment(
    scenario: str,
    scenario_file: str,
    reps: Optional[int],
    ci: bool,
    seed: Optional[int],
    quantile_reps: Optional[int],
    workers: int,
    cache_dir: Optional[str],
    out_dir: str
) -> None:
    '''run a Monte Carlo scenario and write its rejection table'''
    spec = harness.get_scenario(scenario, scenario_file)
    if ci:
        spec = replace(spec, replications=harness.CI_REPLICATIONS)
    if reps is not None:
        spec = replace(spec, replications=reps)
    if seed is not None:
        spec = replace(spec, master_seed=seed)
    if quantile_reps is not None:
        spec = replace(spec, quantile_replications=quantile_reps)
    if spec.task == 'cp_histogram':
        table = harness.changepoint_histogram(spec, workers=workers)
        shown = table
    else:
        kwargs = dict(cache_dir=cache_dir, workers=workers)
        if spec.task == 'normalizers':
            table = harness.compare_normalizers(spec, **kwargs)
        elif spec.task == 'lrv':
            table = harness.compare_lrv(spec, **kwargs)
        else:
            table = harness.run_experiment(spec, **kwargs)
        shown = table.wide()
    csv_path, manifest_path = harness.write_outputs(table, spec, out_dir)
    click.echo(shown.to_string(index=False))
    click.echo(colorstr('experiment: ') + f'{csv_path}, {manifest_path}')
    return


@main.command(name='decide')
@click.option('--statistic', type=float, required=True)
@click.option('--normalizer', type=float, required=True)
@click.option('--delta', type=float, multiple=True, required=True)
@click.option('--level', type=float, multiple=True)
@click.option('--quantile', 'given', type=(float, float), multiple=True)
@click.option('--nu-atoms', type=int, default=DEFAULT_NU_ATOMS)
@click.option('--reps', type=int, default=DEFAULT_REPLICATIONS)
@click.option('--bm-steps', type=int, default=DEFAULT_BM_STEPS)
@click.option('--seed', type=int, default=DEFAULT_SEED)
@click.option('--cache-dir', type=str, envvar=CACHE_ENV, default=None)
@_handle_errors
def cmd_decide(
    statistic: float,
    normalizer: float,
    delta: Tuple[float, ...],
    level: Tuple[float, ...],
    given: Tuple[Tuple[float, float], ...],
    nu_atoms: int,
    reps: int,
    bm_steps: int,
    seed: int,
    cache_dir: Optional[str]
) -> None:
    '''
    decision grid for a reported statistic and normalizer

    --quantile LEVEL Q pins q at a confidence level; otherwise the W table
    for --nu-atoms is used
    '''
    for d in delta:
        check_delta(d)
    if len(given) > 0:
        quantiles = {float(lv): float(q) for lv, q in given}
    else:
        levels = level if len(level) > 0 else DEFAULT_LEVELS
        alphas = [round(1.0 - lv, 12) for lv in levels]
        table = _load_quantiles(
            'standard', NuMeasure.uniform(nu_atoms), alphas,
            reps, bm_steps, seed, cache_dir, workers=1
        )
        quantiles = {float(lv): table.get(lv) for lv in levels}
    grid = decision_grid(statistic, normalizer, list(delta), quantiles)
    click.echo(grid.to_string())
    return


if __name__ == "__main__":
    main()
