# -*- coding: utf-8 -*-
"""Worker-pool helpers.

Parallel work in mvcons is always per-sample (decoding, augmentation) and the
results are gathered in input order, so output never depends on completion order
or on the number of workers.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

# --- Constants ---
THREADS_ENV_VAR = "MVCONS_THREADS"
MAX_AUTO_WORKERS = 8

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Number of worker threads allowed by ``MVCONS_THREADS`` (0 or unset = auto)."""
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if not raw:
        requested = 0
    else:
        try:
            requested = int(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from exc
        if requested < 0:
            raise ConfigurationError(f"{THREADS_ENV_VAR} must be >= 0, got {requested}")
    if requested == 0:
        return max(1, min(MAX_AUTO_WORKERS, os.cpu_count() or 1))
    return requested


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Apply ``fn`` to every item, possibly in parallel, returning results in input order."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
