"""Exact water-filling.

Maximises ``sum(log(1 + gain_i * q_i))`` subject to ``sum(q) = budget`` and
``q >= 0``. The active set is found in closed form: the number of active
channels ``m`` is the largest index with ``(budget + sum_{i<=m} 1/g_i) / m
> 1/g_m``.
"""

from typing import NamedTuple

import numpy as np

from .errors import DomainError


class WaterfillResult(NamedTuple):
    alloc: np.ndarray
    level: float
    active: int


def waterfill(gains, budget):
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 1 or gains.size == 0:
        raise DomainError("gains must be a nonempty 1-D vector")
    if np.any(gains <= 0) or not np.all(np.isfinite(gains)):
        raise DomainError("gains must be positive and finite")
    if np.any(np.diff(gains) > 0):
        raise DomainError("gains must be sorted in descending order")
    if budget < 0 or not np.isfinite(budget):
        raise DomainError(f"budget must be a nonnegative finite number, got {budget}")

    inv = 1.0 / gains
    if budget == 0:
        return WaterfillResult(np.zeros_like(gains), float(inv[0]), 0)
    csum = np.cumsum(inv)
    m = 0
    level = float(inv[0])
    for k in range(gains.size, 0, -1):
        cand = (budget + csum[k - 1]) / k
        if cand > inv[k - 1]:
            m, level = k, float(cand)
            break
    alloc = np.zeros_like(gains)
    alloc[:m] = level - inv[:m]
    return WaterfillResult(alloc, level, m)


def waterfill_batch(gains, budget):
    """Row-wise water-filling over a stack of gain vectors.

    ``gains`` has shape ``(T, n)`` with rows sorted descending. Zero gains are
    allowed here (rank-deficient Wishart spectra) and never become active.
    ``budget`` is a scalar or a length-``T`` array. Returns ``(alloc, level,
    active)`` arrays.
    """
    gains = np.asarray(gains, dtype=float)
    t, n = gains.shape
    budget = np.broadcast_to(np.asarray(budget, dtype=float), (t,))
    with np.errstate(divide="ignore"):
        inv = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), np.inf)
    csum = np.cumsum(inv, axis=1)
    ks = np.arange(1, n + 1)
    with np.errstate(invalid="ignore"):
        cand = (budget[:, None] + csum) / ks
        ok = (cand > inv) & (budget[:, None] > 0)
    any_ok = ok.any(axis=1)
    m = np.where(any_ok, n - np.argmax(ok[:, ::-1], axis=1), 0)
    level = np.where(any_ok, cand[np.arange(t), np.maximum(m, 1) - 1], inv[:, 0])
    alloc = np.where(ks[None, :] <= m[:, None], level[:, None] - inv, 0.0)
    alloc = np.where(np.isfinite(alloc), alloc, 0.0)
    return alloc, level, m
