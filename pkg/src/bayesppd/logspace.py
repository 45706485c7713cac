"""Log-space helpers and the deterministic blocked reduction used by the engine.

Every reduction over latents goes through :func:`block_ranges`: latents are cut
into fixed-size blocks (independent of the worker count), each block produces a
partial result, and partials are combined in block-index order. Results are
therefore bit-identical for any number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

#: Number of latents per reduction block. Part of the determinism contract.
BLOCK_SIZE = 32768

T = TypeVar("T")


def logsumexp(a, axis=None):
    """Max-shifted ``log(sum(exp(a)))``.

    Returns ``-inf`` for empty input or when every entry is ``-inf``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        if axis is None:
            return -np.inf
        shape = list(a.shape)
        del shape[axis]
        return np.full(shape, -np.inf)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def blocked_logsumexp(a: np.ndarray, block: int = BLOCK_SIZE) -> float:
    """Log-sum-exp of a 1-d array with block partials combined by ``math.fsum``.

    The global maximum is order-free; block partial sums use numpy's pairwise
    summation and are combined with a correctly rounded sum.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        return -np.inf
    amax = float(np.max(a))
    if amax == -np.inf:
        return -np.inf
    if amax == np.inf:
        return np.inf
    partials = [float(np.sum(np.exp(a[lo:hi] - amax))) for lo, hi in block_ranges(a.size, block)]
    return amax + math.log(math.fsum(partials))


def normalize_log_weights(log_w: np.ndarray) -> tuple[np.ndarray, float]:
    """Return ``(log_w - logZ, logZ)``."""
    log_z = blocked_logsumexp(log_w)
    return log_w - log_z, log_z


def log_normal_pdf(y, mean, sigma: float):
    z = (np.asarray(y) - np.asarray(mean)) / sigma
    return -0.5 * z * z - math.log(sigma) - LOG_SQRT_2PI


def block_ranges(n: int, block: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    return [(lo, min(lo + block, n)) for lo in range(0, n, block)]


def map_blocks(fn: Callable[[int, int], T], n: int, jobs: int = 1,
               block: int = BLOCK_SIZE) -> list[T]:
    """Apply ``fn(lo, hi)`` to every block, returning results in block order."""
    ranges = block_ranges(n, block)
    if jobs <= 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))


def ordered_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Sum partial arrays sequentially in the given (block) order."""
    it = iter(parts)
    total = np.array(next(it), dtype=np.float64, copy=True)
    for p in it:
        total += p
    return total
