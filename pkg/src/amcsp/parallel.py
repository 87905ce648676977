from __future__ import annotations

import concurrent.futures
import logging
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def shard_map(fn: Callable[[T], R], shards: Sequence[T], workers: int = 1) -> list[R]:
    """Apply `fn` to every shard and return results in shard order.

    With workers > 1 the shards go to a process pool; `fn` and every shard must
    be picklable. The merge order never depends on completion order.
    """
    if workers < 1:
        raise ValueError(f"workers must be positive, got {workers}")
    if workers == 1 or len(shards) <= 1:
        return [fn(shard) for shard in shards]
    logger.debug("Dispatching %d shards to %d workers", len(shards), workers)
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, shards))


def shard_seeds(seed: int, count: int) -> list[int]:
    """Independent 64-bit seeds for `count` shards derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def split_range(total: int, size: int) -> list[tuple[int, int]]:
    size = max(1, size)
    return [(start, min(start + size, total)) for start in range(0, total, size)]
