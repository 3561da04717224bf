#!/usr/bin/env python3
# -*- coding:utf-8 -*-
# General utils
from __future__ import annotations
from typing import Any, Dict
import glob
import hashlib
import json
import logging
import re
import zlib
from pathlib import Path
import numpy as np

# the counter-based generator behind every seeded draw (recorded in caches)
RNG_ALGORITHM = 'philox4x64-seedsequence'

np.set_printoptions(linewidth=320, formatter={'float_kind': '{:11.5g}'.format})


class FtsError(Exception):
    pass


# malformed input data (bad CSV rows, grid mismatch, sparse ingest units)
class DataError(FtsError, ValueError):
    pass


# a mathematical precondition of a procedure is violated (e.g. delta = 0)
class PreconditionError(FtsError, ValueError):
    pass


def set_logging(verbose: bool = True) -> None:
    logging.basicConfig(
        format="%(message)s",
        level=logging.INFO if verbose else logging.WARN)
    return


def make_rng(seed: int) -> np.random.Generator:
    # Philox generator seeded through a SeedSequence
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def derive_seed(master_seed: int, *keys: Any) -> int:
    # stable 64-bit seed for (master_seed, keys...), independent of PYTHONHASHSEED
    entropy = [int(master_seed)]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode('utf-8')))
        else:
            entropy.append(int(key))
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def get_hash(obj: Any) -> str:
    # digest of a JSON-serialisable object
    text = json.dumps(obj, sort_keys=True, default=repr)
    return hashlib.sha1(text.encode('utf-8')).hexdigest()[:16]


def package_versions() -> Dict[str, str]:
    import numpy
    import pandas
    import scipy
    import yaml
    return {
        'numpy': numpy.__version__,
        'scipy': scipy.__version__,
        'pandas': pandas.__version__,
        'yaml': yaml.__version__,
    }


def increment_path(path: str, exist_ok: bool = True, sep: str = '') -> Path:
    # runs/name, then runs/name{sep}2, runs/name{sep}3, ...
    path = Path(path)
    if exist_ok or not path.exists():
        return path
    pattern = re.compile(rf'{re.escape(path.name)}{re.escape(sep)}(\d+)$')
    taken = [int(m.group(1)) for m in (pattern.match(Path(d).name) for d in glob.glob(f'{path}{sep}*')) if m]
    return path.with_name(f'{path.name}{sep}{max(taken, default=1) + 1}')


# ANSI codes used by the command line messages
COLORS = {'red': '\033[31m', 'green': '\033[32m', 'blue': '\033[34m', 'bold': '\033[1m', 'end': '\033[0m'}


def colorstr(*input: str) -> str:
    # colorstr('red', 'text'); a lone string is printed blue and bold
    *styles, text = input if len(input) > 1 else ('blue', 'bold', input[0])
    return ''.join(COLORS[s] for s in styles) + f'{text}' + COLORS['end']
