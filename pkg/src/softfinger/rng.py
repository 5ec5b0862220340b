"""Counter-based random streams and an order-preserving parallel map.

Samples are generated in fixed-size blocks.  Block ``b`` of stream ``s``
under seed ``k`` is drawn from a Philox generator keyed by ``(k, s, b)``,
so the numbers depend only on those three integers and never on how blocks
are distributed across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK_SIZE = 8192

_MASK64 = (1 << 64) - 1


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    if seed < 0 or stream < 0 or block < 0:
        raise ValueError("seed, stream and block must be nonnegative")
    key = np.array([seed & _MASK64, ((stream & 0xFFFFFFFF) << 32) | (block & 0xFFFFFFFF)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def block_ranges(n: int, block_size: int = BLOCK_SIZE):
    """``(block_index, start, stop)`` triples covering ``range(n)``."""
    return [(b, start, min(start + block_size, n)) for b, start in enumerate(range(0, n, block_size))]


def uniform_block(seed: int, stream: int, block: int, size: int, dim: int) -> np.ndarray:
    """Uniforms in the open interval (0, 1), shape (size, dim)."""
    u = block_generator(seed, stream, block).random((size, dim))
    # random() is on [0, 1); the inverse CDFs need the open interval
    return np.where(u == 0.0, np.finfo(float).tiny, u)


def uniforms(seed: int, stream: int, n: int, dim: int, block_size: int = BLOCK_SIZE) -> np.ndarray:
    return np.concatenate(
        [uniform_block(seed, stream, b, stop - start, dim) for b, start, stop in block_ranges(n, block_size)]
    )


def ordered_map(fn, items, workers: int = 1):
    """``list(map(fn, items))`` evaluated on up to ``workers`` threads."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
