#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Any, Dict, List, Optional, Sequence, Tuple
import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from multiprocessing.pool import ThreadPool
from pathlib import Path
import numpy as np
import pandas as pd
import yaml
from scipy.stats import norm
from tqdm import tqdm
import dgp
from func_core import (
    FunctionalSample, Grid, NuMeasure, NORMALIZER_KINDS, self_normalizer
)
from mean_tests import decide, one_sample_profile, two_sample_profile
from changepoint import DEFAULT_TRIM, cp_profile, estimate_changepoint
from cov_tests import (
    check_nu_floor, cov_cp_profile, cov_two_sample_profile, estimate_cov_changepoint
)
from longrun import estimate_lrv, far1_tau2
from pivotal import (
    DEFAULT_REPLICATIONS as PIVOT_REPLICATIONS,
    PivotalQuantiles, get_quantiles, pivot_kind
)
from utils.general import derive_seed, increment_path, package_versions

logger = logging.getLogger(__name__)

SCENARIO_FILE = str(Path(__file__).resolve().parent / 'scenarios.yaml')
TASKS = (
    'one_sample', 'two_sample', 'normalizers', 'lrv', 'changepoint',
    'cp_histogram', 'cov_two_sample', 'cov_changepoint'
)
# error process name in scenarios -> dgp variant
ERROR_PROCESSES = {
    'iid': 'iid_basis',
    'fma1': 'fma1',
    'bb': 'brownian_bridge',
    'heavy_t5': 'heavy_t5_basis',
    'far1': 'far1',
    'far1_t5': 'far1',
    'kraus': 'kraus_t5',
}
MIN_REPLICATIONS = 100
DEFAULT_REPLICATIONS = 1000
# reduced replication count for quick runs
CI_REPLICATIONS = 300
HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    task: str
    sweep_name: str
    sweep_values: Tuple[float, ...]
    sizes: Tuple[Tuple[int, ...], ...]
    delta: float
    alphas: Tuple[float, ...] = (0.05,)
    replications: int = DEFAULT_REPLICATIONS
    master_seed: int = 0
    errors: str = 'iid'
    basis: str = 'bspline'
    dimension: int = dgp.DEFAULT_DIMENSION
    sigma_profile: str = 'inv_i_sq'
    kappa: float = dgp.DEFAULT_KAPPA
    theta0: float = 0.5
    trim: float = DEFAULT_TRIM
    # scale of the second sample's or post-break errors
    y_scale: float = 1.0
    # lrv task: delta of the mean function (defaults to delta)
    mean_param: Optional[float] = None
    resolution: int = 100
    nu_atoms: int = 19
    normalizer_kind: str = 'standard'
    quantile_replications: int = PIVOT_REPLICATIONS
    bins: int = HISTOGRAM_BINS

    def __post_init__(self: ExperimentSpec) -> None:
        if self.task not in TASKS:
            raise ValueError(f'unknown task: {self.task} (expected one of {TASKS})')
        if self.replications < MIN_REPLICATIONS:
            raise ValueError(
                f'replications must be >= {MIN_REPLICATIONS} ({self.replications})'
            )
        if len(self.sweep_values) == 0 or len(self.sizes) == 0:
            raise ValueError(f'{self.scenario}: sweep and sizes must be nonempty')
        if self.errors not in ERROR_PROCESSES and self.errors != 'dependent':
            raise ValueError(f'{self.scenario}: unknown error process {self.errors}')
        two = self.task in ('two_sample', 'normalizers', 'cov_two_sample')
        for size in self.sizes:
            if len(size) != (2 if two else 1):
                raise ValueError(f'{self.scenario}: bad sample size {size}')
        return

    def to_dict(self: ExperimentSpec) -> Dict[str, Any]:
        document = asdict(self)
        document['sweep_values'] = list(self.sweep_values)
        document['sizes'] = [list(s) for s in self.sizes]
        document['alphas'] = list(self.alphas)
        return document

    @classmethod
    def from_dict(cls, scenario: str, document: Dict[str, Any]) -> ExperimentSpec:
        document = dict(document)
        sweep = document.pop('sweep')
        sizes = [
            tuple(int(v) for v in s) if isinstance(s, (list, tuple)) else (int(s),)
            for s in document.pop('sizes')
        ]
        delta = _resolve_delta(document.pop('delta'), document)
        alphas = tuple(float(a) for a in document.pop('alphas', (0.05,)))
        return cls(
            scenario=scenario,
            sweep_name=str(sweep['name']),
            sweep_values=tuple(float(v) for v in sweep['values']),
            sizes=tuple(sizes),
            delta=delta,
            alphas=alphas,
            **document
        )


def _resolve_delta(value: Any, document: Dict[str, Any]) -> float:
    # a number, or a population distance at a boundary scale
    if not isinstance(value, dict):
        return float(value)
    rule, scale = value['rule'], float(value['scale'])
    if rule == 'cov_boundary':
        return dgp.cov_population_distance(
            document.get('sigma_profile', 'inv_i_sq'),
            int(document.get('dimension', dgp.DEFAULT_DIMENSION)),
            scale,
            float(document.get('kappa', dgp.DEFAULT_KAPPA)),
            'iid' if document.get('errors') == 'iid' else 'fma1'
        )
    elif rule == 'kraus_boundary':
        return dgp.kraus_population_distance(scale)
    raise ValueError(f'unknown delta rule: {rule}')


def load_scenarios(path: str = SCENARIO_FILE) -> Dict[str, ExperimentSpec]:
    with open(path, 'rt') as rf:
        documents = yaml.safe_load(rf)
    return {
        name: ExperimentSpec.from_dict(name, document)
        for name, document in documents.items()
    }


def get_scenario(name: str, path: str = SCENARIO_FILE) -> ExperimentSpec:
    scenarios = load_scenarios(path)
    if name not in scenarios:
        raise ValueError(f'unknown scenario: {name} (known: {sorted(scenarios)})')
    return scenarios[name]


@dataclass(frozen=True)
class RejectionTable:
    frame: pd.DataFrame = field(default_factory=pd.DataFrame)

    COLUMNS = [
        'scenario', 'test', 'sweep', 'value', 'sizes', 'alpha',
        'rejections', 'replications', 'rate', 'stderr'
    ]

    @classmethod
    def from_rows(cls, rows: List[Dict[str, Any]]) -> RejectionTable:
        frame = pd.DataFrame(rows, columns=cls.COLUMNS)
        return cls(frame)

    def rate(self: RejectionTable, test: str, value: float, sizes: str, alpha: float) -> float:
        frame = self.frame
        match = frame[
            (frame['test'] == test) &
            np.isclose(frame['value'], value) &
            (frame['sizes'] == sizes) &
            np.isclose(frame['alpha'], alpha)
        ]
        if len(match) != 1:
            raise KeyError(f'no unique row for {test}, {value}, {sizes}, {alpha}')
        return float(match['rate'].iloc[0])

    def wide(self: RejectionTable) -> pd.DataFrame:
        # one rate column per test
        return self.frame.pivot_table(
            index=['sweep', 'value', 'sizes', 'alpha'], columns='test', values='rate'
        ).reset_index()

    def to_csv(self: RejectionTable, path: str) -> None:
        self.frame.to_csv(path, index=False)
        return


def _size_label(size: Sequence[int]) -> str:
    return 'x'.join(str(s) for s in size)


class Experiment(object):
    '''
    replications of one scenario

    replication r at sweep point (size i, value j) draws its data from
    derive_seed(master_seed, scenario, i, j, r), so results do not depend on
    the number of workers or the order in which replications finish
    '''
    def __init__(
        self: Experiment,
        spec: ExperimentSpec,
        quantiles: Optional[Dict[str, PivotalQuantiles]] = None,
        cache_dir: Optional[str] = None,
        workers: int = 1,
        progress: bool = True
    ) -> None:
        self.spec = spec
        self.grid = Grid.equidistant(spec.resolution)
        self.basis = dgp.BasisSpec(spec.basis, spec.dimension, self.grid)
        self.nu = NuMeasure.uniform(spec.nu_atoms)
        self.workers = max(1, workers)
        self.progress = progress
        if spec.task in ('cov_two_sample', 'cov_changepoint'):
            check_nu_floor(self.nu)
        self.kinds = (
            list(NORMALIZER_KINDS) if spec.task == 'normalizers'
            else [spec.normalizer_kind]
        )
        if quantiles is None:
            quantiles = dict()
            if spec.task != 'cp_histogram':
                for kind in self.kinds:
                    quantiles[pivot_kind(kind)] = get_quantiles(
                        kind, self.nu, spec.alphas,
                        replications=spec.quantile_replications,
                        cache_dir=cache_dir,
                        workers=self.workers,
                        progress=progress
                    )
        self.quantiles = quantiles
        return

    def _error_spec(
        self: Experiment,
        n: int,
        seed: int,
        mean: Optional[Any] = None,
        kappa: Optional[float] = None
    ) -> dgp.DgpSpec:
        spec = self.spec
        if spec.errors not in ERROR_PROCESSES:
            raise ValueError(f'{spec.scenario}: {spec.errors} is not a single-sample process')
        return dgp.DgpSpec(
            variant=ERROR_PROCESSES[spec.errors],
            n=n,
            seed=seed,
            basis=self.basis,
            sigma_profile=spec.sigma_profile,
            kappa=spec.kappa if kappa is None else kappa,
            mean=mean,
            innovation='t5' if spec.errors == 'far1_t5' else 'gaussian',
        )

    def _mean_delta(self: Experiment) -> float:
        spec = self.spec
        return spec.delta if spec.mean_param is None else spec.mean_param

    def samples(
        self: Experiment,
        value: float,
        size: Sequence[int],
        seed: int
    ) -> Tuple[FunctionalSample, ...]:
        spec, grid = self.spec, self.grid
        task = spec.task
        if task == 'one_sample':
            mean = dgp.make_mean('sin_sqrt2delta', value, grid)
            return (dgp.sample(self._error_spec(size[0], seed, mean)),)
        elif task == 'lrv':
            mean = dgp.make_mean('sin_sqrt2delta', self._mean_delta(), grid)
            return (dgp.sample(self._error_spec(size[0], seed, mean, kappa=value)),)
        elif task in ('two_sample', 'normalizers'):
            m, n = size
            mean_y = dgp.make_mean('parabola_a', value, grid)
            if spec.errors == 'dependent':
                stream = dgp.DgpSpec(
                    'fma1', n=m + n, seed=seed, basis=self.basis,
                    sigma_profile=spec.sigma_profile, kappa=spec.kappa
                )
                return dgp.sample_dependent_pair(stream, m, n, spec.y_scale, None, mean_y)
            x = dgp.sample(self._error_spec(m, derive_seed(seed, 'x')))
            y = dgp.sample(self._error_spec(n, derive_seed(seed, 'y'), mean_y))
            return x, y
        elif task in ('changepoint', 'cp_histogram'):
            jump = dgp.make_mean('parabola_a', value, grid)
            stream = self._error_spec(size[0], seed)
            return (dgp.sample_mean_changepoint(stream, spec.theta0, jump, spec.y_scale),)
        elif task == 'cov_two_sample':
            m, n = size
            if spec.errors == 'kraus':
                x = dgp.sample_kraus_t5(m, grid, derive_seed(seed, 'x'))
                y = dgp.sample_kraus_t5(n, grid, derive_seed(seed, 'y'), scale=value)
                return x, y
            pair = dgp.DgpSpec(
                'cov_scenario', n=m, n_y=n, seed=seed, basis=self.basis,
                sigma_profile=spec.sigma_profile, kappa=spec.kappa,
                scale=value, dependence=spec.errors
            )
            return dgp.sample_cov_scenario(pair)
        # cov_changepoint
        stream = dgp.DgpSpec(
            'cov_scenario', n=size[0], seed=seed, basis=self.basis,
            sigma_profile=spec.sigma_profile, kappa=spec.kappa,
            scale=value, dependence=spec.errors
        )
        return (dgp.sample_cov_changepoint(stream, spec.theta0),)

    def statistics(
        self: Experiment,
        samples: Tuple[FunctionalSample, ...],
        value: float
    ) -> List[Tuple[str, float, float, str]]:
        # (test label, statistic, normalizer, pivot or 'normal')
        task, nu = self.spec.task, self.nu
        if task == 'one_sample':
            profile = one_sample_profile(samples[0], nu)
        elif task in ('two_sample', 'normalizers'):
            profile = two_sample_profile(samples[0], samples[1], nu)
        elif task == 'lrv':
            return self._lrv_statistics(samples[0], value)
        elif task == 'changepoint':
            fit = estimate_changepoint(samples[0], self.spec.trim)
            profile = cp_profile(samples[0], nu, fit.theta_hat)
        elif task == 'cov_two_sample':
            profile = cov_two_sample_profile(samples[0], samples[1], nu)
        elif task == 'cov_changepoint':
            fit = estimate_cov_changepoint(samples[0], self.spec.trim)
            profile = cov_cp_profile(samples[0], nu, fit.theta_hat)
        else:
            raise ValueError(f'{task} has no test statistics')
        labels = self.kinds if task == 'normalizers' else ['self-normalized']
        return [
            (label, profile[1.0], self_normalizer(profile, nu, kind), pivot_kind(kind))
            for label, kind in zip(labels, self.kinds)
        ]

    def _lrv_statistics(
        self: Experiment,
        sample: FunctionalSample,
        kappa: float
    ) -> List[Tuple[str, float, float, str]]:
        profile = one_sample_profile(sample, self.nu)
        statistic = profile[1.0]
        root_n = np.sqrt(sample.n)
        estimate = estimate_lrv(sample)
        mean = dgp.make_mean('sin_sqrt2delta', self._mean_delta(), self.grid)
        tau = np.sqrt(far1_tau2(mean, kappa, self.spec.dimension, self.spec.sigma_profile))
        return [
            ('self-normalized', statistic, self_normalizer(profile, self.nu, 'standard'), 'W'),
            ('lrv-estimated', statistic, np.sqrt(estimate.tau2) / root_n, 'normal'),
            ('lrv-true', statistic, tau / root_n, 'normal'),
        ]

    def _quantile(self: Experiment, pivot: str, alpha: float) -> float:
        if pivot == 'normal':
            return float(norm.ppf(1.0 - alpha))
        return self.quantiles[pivot].upper(alpha)

    def replicate(
        self: Experiment,
        value: float,
        size: Sequence[int],
        seed: int
    ) -> Counter:
        samples = self.samples(value, size, seed)
        decisions = Counter()
        for label, statistic, normalizer, pivot in self.statistics(samples, value):
            for alpha in self.spec.alphas:
                q = self._quantile(pivot, alpha)
                _, reject = decide(statistic, normalizer, self.spec.delta, q)
                decisions[(label, alpha)] += int(reject)
        return decisions

    def _points(self: Experiment):
        for i, size in enumerate(self.spec.sizes):
            for j, value in enumerate(self.spec.sweep_values):
                yield i, size, j, value

    def _map(self: Experiment, func, items: Sequence, desc: str) -> List:
        with ThreadPool(self.workers) as pool:
            return list(tqdm(
                pool.imap(func, items),
                total=len(items),
                desc=desc,
                disable=not self.progress
            ))

    def run(self: Experiment) -> RejectionTable:
        spec = self.spec
        labels = (
            ['self-normalized', 'lrv-estimated', 'lrv-true'] if spec.task == 'lrv'
            else (self.kinds if spec.task == 'normalizers' else ['self-normalized'])
        )
        rows = list()
        for i, size, j, value in self._points():
            seeds = [
                derive_seed(spec.master_seed, spec.scenario, i, j, r)
                for r in range(spec.replications)
            ]
            desc = f'{spec.scenario} {spec.sweep_name}={value:g} size={_size_label(size)}'
            totals = Counter()
            for decisions in self._map(lambda s: self.replicate(value, size, s), seeds, desc):
                totals.update(decisions)
            for label in labels:
                for alpha in spec.alphas:
                    count = totals[(label, alpha)]
                    rate = count / spec.replications
                    rows.append({
                        'scenario': spec.scenario,
                        'test': label,
                        'sweep': spec.sweep_name,
                        'value': value,
                        'sizes': _size_label(size),
                        'alpha': alpha,
                        'rejections': count,
                        'replications': spec.replications,
                        'rate': rate,
                        'stderr': float(np.sqrt(rate * (1.0 - rate) / spec.replications)),
                    })
        return RejectionTable.from_rows(rows)

    def estimates(self: Experiment) -> pd.DataFrame:
        # change-point estimates theta_hat per replication
        spec = self.spec
        rows = list()
        for i, size, j, value in self._points():
            seeds = [
                derive_seed(spec.master_seed, spec.scenario, i, j, r)
                for r in range(spec.replications)
            ]

            def _estimate(seed: int) -> float:
                sample = self.samples(value, size, seed)[0]
                return estimate_changepoint(sample, spec.trim).theta_hat

            desc = f'{spec.scenario} {spec.sweep_name}={value:g} N={size[0]}'
            for r, theta_hat in enumerate(self._map(_estimate, seeds, desc)):
                rows.append({
                    'scenario': spec.scenario,
                    'value': value,
                    'N': size[0],
                    'replication': r,
                    'theta_hat': theta_hat,
                })
        return pd.DataFrame(rows)


def run_experiment(
    spec: ExperimentSpec,
    quantiles: Optional[Dict[str, PivotalQuantiles]] = None,
    cache_dir: Optional[str] = None,
    workers: int = 1,
    progress: bool = True
) -> RejectionTable:
    if spec.task == 'cp_histogram':
        raise ValueError(f'{spec.scenario} estimates break points; use changepoint_histogram')
    start = time.perf_counter()
    table = Experiment(spec, quantiles, cache_dir, workers, progress).run()
    logger.info(f'{spec.scenario}: {len(table.frame)} rates in {time.perf_counter() - start:.1f}s')
    return table


def compare_normalizers(spec: ExperimentSpec, **kwargs: Any) -> RejectionTable:
    # standard, sup and abs normalizers on identical samples
    if spec.task not in ('two_sample', 'normalizers'):
        raise ValueError(f'{spec.scenario} is not a two-sample scenario')
    return run_experiment(replace(spec, task='normalizers'), **kwargs)


def compare_lrv(spec: ExperimentSpec, **kwargs: Any) -> RejectionTable:
    # self-normalized against estimated and true long-run variance
    if spec.task != 'lrv' or spec.errors not in ('far1', 'far1_t5'):
        raise ValueError(f'{spec.scenario} is not an fAR(1) long-run variance scenario')
    return run_experiment(spec, **kwargs)


def changepoint_estimates(
    spec: ExperimentSpec,
    workers: int = 1,
    progress: bool = True
) -> pd.DataFrame:
    if spec.task not in ('changepoint', 'cp_histogram'):
        raise ValueError(f'{spec.scenario} is not a change-point scenario')
    return Experiment(spec, quantiles=dict(), workers=workers, progress=progress).estimates()


def changepoint_histogram(
    spec: ExperimentSpec,
    workers: int = 1,
    progress: bool = True
) -> pd.DataFrame:
    estimates = changepoint_estimates(spec, workers, progress)
    rows = list()
    for (value, n), group in estimates.groupby(['value', 'N']):
        counts, edges = np.histogram(group['theta_hat'], bins=spec.bins, range=(0.0, 1.0))
        for count, left, right in zip(counts, edges[:-1], edges[1:]):
            rows.append({
                'scenario': spec.scenario,
                'value': value,
                'N': n,
                'bin_left': left,
                'bin_right': right,
                'count': int(count),
                'frequency': count / len(group),
            })
    return pd.DataFrame(rows)


def write_outputs(
    table: Any,
    spec: ExperimentSpec,
    out_dir: str = 'runs'
) -> Tuple[Path, Path]:
    '''
    plot-ready CSV and a run manifest under runs/<scenario>, runs/<scenario>2, ...
    '''
    frame = table.frame if isinstance(table, RejectionTable) else table
    directory = increment_path(Path(out_dir) / spec.scenario, exist_ok=False)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f'{spec.scenario}.csv'
    frame.to_csv(csv_path, index=False)
    manifest = {
        'spec': spec.to_dict(),
        'versions': package_versions(),
        'seed_derivation': 'SeedSequence([master_seed, crc32(scenario), size_index, value_index, replication])',
        'master_seed': spec.master_seed,
        'created': time.strftime('%Y-%m-%dT%H:%M:%S'),
    }
    manifest_path = directory / 'manifest.json'
    with open(manifest_path, 'wt') as wf:
        json.dump(manifest, wf, indent=2)
    return csv_path, manifest_path
