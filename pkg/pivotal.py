#!/usr/bin/env python3
# -*- coding:utf-8 -*-
from __future__ import annotations
from typing import Dict, Iterable, List, Optional, Sequence
import os
import json
import logging
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from pathlib import Path
import numpy as np
from tqdm import tqdm
from func_core import NuMeasure, floor_index, near_integer
from utils.general import RNG_ALGORITHM, PreconditionError, get_hash

logger = logging.getLogger(__name__)

PIVOT_KINDS = ('W', 'Wstar', 'Wstarstar')
# pivot calibrating each self-normalizer kind
PIVOT_OF_NORMALIZER = {'standard': 'W', 'sup': 'Wstar', 'abs': 'Wstarstar'}
DEFAULT_REPLICATIONS = 100000
DEFAULT_BM_STEPS = 2000
DEFAULT_SEED = 42
DEFAULT_PROBABILITIES = (0.01, 0.05, 0.10, 0.90, 0.95, 0.99)
MIN_TABLE_REPLICATIONS = 1000
# replications per independent random stream
STREAM_SIZE = 10000
# Brownian paths simulated at once inside a stream
BATCH_SIZE = 500
CACHE_ENV = 'FTS_CACHE_DIR'
DEFAULT_CACHE_DIR = 'quantiles'
CACHE_VERSION = 1
# probabilities match table keys within this distance
PROBABILITY_TOLERANCE = 1e-9


def pivot_kind(normalizer_kind: str) -> str:
    if normalizer_kind not in PIVOT_OF_NORMALIZER:
        raise ValueError(f'unknown normalizer kind: {normalizer_kind}')
    return PIVOT_OF_NORMALIZER[normalizer_kind]


def _check_kind(kind: str) -> None:
    if kind not in PIVOT_KINDS:
        raise ValueError(f'unknown pivot kind: {kind} (expected one of {PIVOT_KINDS})')
    return


def _warn_off_grid(nu: NuMeasure, bm_steps: int) -> None:
    off = [
        float(lam) for lam in nu.support
        if near_integer(bm_steps * float(lam)) is None
    ]
    if len(off) > 0:
        logger.warning(
            f'{len(off)} atoms of nu are not nodes of a {bm_steps}-step '
            f'Brownian grid (e.g. {off[0]}); they are floored'
        )
    return


def _pivot_batch(
    kind: str,
    nu: NuMeasure,
    indices: np.ndarray,
    rng: np.random.Generator,
    size: int,
    bm_steps: int
) -> np.ndarray:
    increments = rng.standard_normal((size, bm_steps)) * np.sqrt(1.0 / bm_steps)
    path = np.cumsum(increments, axis=1)
    end = path[:, -1]
    # B(0) = 0 for atoms below the first step
    at_atoms = np.where(indices > 0, path[:, np.maximum(indices - 1, 0)], 0.0)
    lam = nu.support
    bridge = lam * (at_atoms - lam * end[:, np.newaxis])
    if kind == 'W':
        denominator = np.sqrt(np.sum(nu.weights * bridge ** 2, axis=1))
    elif kind == 'Wstar':
        denominator = np.max(np.abs(bridge[:, nu.weights > 0]), axis=1)
    else:
        denominator = np.sum(nu.weights * np.abs(bridge), axis=1)
    ok = denominator > 0
    return end[ok] / denominator[ok]


def _draw_stream(
    kind: str,
    nu: NuMeasure,
    count: int,
    bm_steps: int,
    seed_sequence: np.random.SeedSequence
) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed_sequence))
    indices = np.array([floor_index(bm_steps, lam) for lam in nu.support])
    draws = np.empty(count)
    filled = 0
    while filled < count:
        size = min(BATCH_SIZE, count - filled)
        # draws with a zero denominator are dropped and simulated again
        batch = _pivot_batch(kind, nu, indices, rng, size, bm_steps)
        draws[filled:filled + len(batch)] = batch
        filled += len(batch)
    return draws


def simulate_pivot_draws(
    kind: str,
    nu: NuMeasure,
    replications: int = DEFAULT_REPLICATIONS,
    bm_steps: int = DEFAULT_BM_STEPS,
    seed: int = DEFAULT_SEED,
    workers: int = 1,
    progress: bool = False
) -> np.ndarray:
    '''
    draws of W, W* or W** for the measure nu

    replications are split into streams of STREAM_SIZE draws, each with
    its own child of SeedSequence(seed); streams are concatenated in order
    so the result does not depend on the number of workers
    '''
    _check_kind(kind)
    if replications < 1:
        raise ValueError(f'replications must be >= 1 ({replications})')
    if bm_steps < 1:
        raise ValueError(f'bm_steps must be >= 1 ({bm_steps})')
    _warn_off_grid(nu, bm_steps)
    n_streams = -(-replications // STREAM_SIZE)
    children = np.random.SeedSequence(seed).spawn(n_streams)
    counts = [STREAM_SIZE] * (n_streams - 1)
    counts.append(replications - STREAM_SIZE * (n_streams - 1))

    def _run(stream: int) -> np.ndarray:
        return _draw_stream(kind, nu, counts[stream], bm_steps, children[stream])

    with ThreadPool(max(1, workers)) as pool:
        results = list(tqdm(
            pool.imap(_run, range(n_streams)),
            total=n_streams,
            desc=f'{kind} draws',
            disable=not progress
        ))
    return np.concatenate(results)


def quantile(draws: Sequence[float], p: float) -> float:
    # linear interpolation between order statistics, h = (n - 1)p + 1
    draws = np.asarray(draws, dtype=np.float64)
    if draws.size == 0:
        raise ValueError('no draws to take a quantile of')
    if not 0.0 < p < 1.0:
        raise ValueError(f'probability must lie in (0, 1) ({p})')
    return float(np.quantile(draws, p, method='linear'))


@dataclass(frozen=True)
class PivotalQuantiles:
    kind: str
    nu: NuMeasure
    replications: int
    bm_steps: int
    seed: int
    table: Dict[float, float] = field(default_factory=dict)
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self: PivotalQuantiles) -> None:
        _check_kind(self.kind)
        ordered = [self.table[p] for p in sorted(self.table)]
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            raise ValueError('quantile table must be nondecreasing in probability')
        return

    def has(self: PivotalQuantiles, p: float) -> bool:
        return any(abs(key - p) <= PROBABILITY_TOLERANCE for key in self.table)

    def get(self: PivotalQuantiles, p: float) -> float:
        for key, value in self.table.items():
            if abs(key - p) <= PROBABILITY_TOLERANCE:
                return value
        raise ValueError(
            f'{self.kind} table has no quantile at p={p} '
            f'(available: {sorted(self.table)})'
        )

    def upper(self: PivotalQuantiles, alpha: float) -> float:
        # q_{1-alpha}
        return self.get(1.0 - alpha)

    def lower(self: PivotalQuantiles, alpha: float) -> float:
        # q_alpha, from the symmetry of the pivots when only the upper tail is stored
        if self.has(alpha):
            return self.get(alpha)
        logger.info(f'{self.kind} table has no q_{alpha}; using -q_{1 - alpha}')
        return -self.get(1.0 - alpha)

    def check_matches(self: PivotalQuantiles, normalizer_kind: str, nu: NuMeasure) -> None:
        expected = pivot_kind(normalizer_kind)
        if self.kind != expected:
            raise PreconditionError(
                f'normalizer {normalizer_kind} needs a {expected} table, got {self.kind}'
            )
        if self.nu != nu:
            raise PreconditionError(
                f'quantile table was simulated for {self.nu}, the test uses {nu}'
            )
        return

    def to_dict(self: PivotalQuantiles) -> Dict:
        return {
            'kind': self.kind,
            'nu': self.nu.to_dict(),
            'replications': self.replications,
            'bm_steps': self.bm_steps,
            'seed': self.seed,
            'rng_algorithm': self.rng_algorithm,
            'quantiles': {repr(float(p)): q for p, q in sorted(self.table.items())},
        }

    @classmethod
    def from_dict(cls, document: Dict) -> PivotalQuantiles:
        nu = document['nu']
        return cls(
            kind=document['kind'],
            nu=NuMeasure(nu['support'], nu['weights']),
            replications=int(document['replications']),
            bm_steps=int(document['bm_steps']),
            seed=int(document['seed']),
            table={float(p): float(q) for p, q in document['quantiles'].items()},
            rng_algorithm=document.get('rng_algorithm', RNG_ALGORITHM),
        )


def resolve_cache_dir(cache_dir: Optional[str] = None) -> Path:
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV, DEFAULT_CACHE_DIR)
    return Path(cache_dir)


def cache_path(
    kind: str,
    nu: NuMeasure,
    replications: int,
    bm_steps: int,
    seed: int,
    cache_dir: Optional[str] = None
) -> Path:
    key = get_hash({
        'kind': kind,
        'nu': nu.digest(),
        'replications': replications,
        'bm_steps': bm_steps,
        'seed': seed,
        'rng': RNG_ALGORITHM,
        'version': CACHE_VERSION,
    })
    return resolve_cache_dir(cache_dir) / f'{kind}_{key}.json'


def _load_cache(path: Path) -> Optional[PivotalQuantiles]:
    if not path.exists():
        return None
    try:
        with open(path, 'rt') as rf:
            return PivotalQuantiles.from_dict(json.load(rf))
    except (ValueError, KeyError) as e:
        logger.warning(f'ignoring unreadable quantile cache {path}: {e}')
        return None


def _save_cache(table: PivotalQuantiles, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix('.tmp')
    with open(tmp, 'wt') as wf:
        json.dump(table.to_dict(), wf, indent=2)
    tmp.replace(path)
    return


def build_quantile_table(
    kind: str,
    nu: NuMeasure,
    probabilities: Iterable[float] = DEFAULT_PROBABILITIES,
    replications: int = DEFAULT_REPLICATIONS,
    bm_steps: int = DEFAULT_BM_STEPS,
    seed: int = DEFAULT_SEED,
    cache_dir: Optional[str] = None,
    use_cache: bool = True,
    workers: int = 1,
    progress: bool = False
) -> PivotalQuantiles:
    _check_kind(kind)
    probabilities = sorted(set(float(p) for p in probabilities))
    if len(probabilities) == 0 or any(not 0.0 < p < 1.0 for p in probabilities):
        raise ValueError(f'probabilities must lie in (0, 1) ({probabilities})')
    if replications < MIN_TABLE_REPLICATIONS:
        raise ValueError(
            f'a quantile table needs >= {MIN_TABLE_REPLICATIONS} replications ({replications})'
        )
    path = cache_path(kind, nu, replications, bm_steps, seed, cache_dir)
    table: Dict[float, float] = dict()
    if use_cache:
        cached = _load_cache(path)
        if cached is not None:
            if all(cached.has(p) for p in probabilities):
                logger.info(f'quantile cache hit: {path}')
                return cached
            table.update(cached.table)
    draws = simulate_pivot_draws(
        kind, nu, replications, bm_steps, seed, workers=workers, progress=progress
    )
    for p in probabilities:
        table[p] = quantile(draws, p)
    result = PivotalQuantiles(
        kind=kind,
        nu=nu,
        replications=replications,
        bm_steps=bm_steps,
        seed=seed,
        table=table,
    )
    if use_cache:
        _save_cache(result, path)
        logger.info(f'quantile table written to {path}')
    return result


def quantiles_for_alphas(alphas: Iterable[float]) -> List[float]:
    # both tails for every level
    probabilities = set()
    for alpha in alphas:
        probabilities.add(round(float(alpha), 12))
        probabilities.add(round(1.0 - float(alpha), 12))
    return sorted(probabilities)


def get_quantiles(
    normalizer_kind: str,
    nu: NuMeasure,
    alphas: Iterable[float] = (0.01, 0.05, 0.10),
    replications: int = DEFAULT_REPLICATIONS,
    bm_steps: int = DEFAULT_BM_STEPS,
    seed: int = DEFAULT_SEED,
    cache_dir: Optional[str] = None,
    workers: int = 1,
    progress: bool = False
) -> PivotalQuantiles:
    '''
    quantile table for a test, built on demand when the cache lacks it
    '''
    kind = pivot_kind(normalizer_kind)
    probabilities = quantiles_for_alphas(alphas)
    path = cache_path(kind, nu, replications, bm_steps, seed, cache_dir)
    if not path.exists():
        logger.warning(
            f'no cached {kind} table for {nu}; simulating {replications} draws'
        )
    return build_quantile_table(
        kind, nu, probabilities, replications, bm_steps, seed,
        cache_dir=cache_dir, workers=workers, progress=progress
    )
