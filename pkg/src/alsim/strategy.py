"""Query strategies over an unlabeled pool, with optional uncertainty clipping.

Each strategy ranks the pool most-uncertain-first, drops the clipped prefix
(``ceil(clip_fraction * pool_size)`` samples), and returns the next
``batch_size`` indices. Ties everywhere break by ascending sample index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .confidence import ConfidenceReport

__all__ = [
    "QueryRequest",
    "PoolExhausted",
    "apply_clipping",
    "least_confidence",
    "entropy_strategy",
    "margin_strategy",
    "random_strategy",
    "STRATEGY_IDS",
]

#: ranking strategies addressable from configs
STRATEGY_IDS = ("lc", "ent", "mm", "rand")


class PoolExhausted(ValueError):
    """Raised when the pool cannot supply a full batch after clipping."""


@dataclass(frozen=True)
class QueryRequest:
    """One query: the pool, its confidence reports, and selection settings."""

    pool: np.ndarray
    batch_size: int
    report: ConfidenceReport | None = None
    clip_fraction: float = 0.05
    seed: int | None = None

    def __post_init__(self):
        pool = np.asarray(self.pool, dtype=np.int64)
        object.__setattr__(self, "pool", pool)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.clip_fraction < 1.0:
            raise ValueError("clip_fraction must lie in [0, 1)")
        if self.report is not None and len(self.report) != pool.size:
            raise ValueError("report size does not match pool size")


def apply_clipping(ranked: np.ndarray, pool_size: int,
                   clip_fraction: float) -> np.ndarray:
    """Drop the ``ceil(clip_fraction * pool_size)`` most uncertain entries."""
    if not 0.0 <= clip_fraction < 1.0:
        raise ValueError("clip_fraction must lie in [0, 1)")
    drop = math.ceil(clip_fraction * pool_size)
    return ranked[drop:]


def _take(ranked: np.ndarray, req: QueryRequest) -> np.ndarray:
    remaining = apply_clipping(ranked, req.pool.size, req.clip_fraction)
    if remaining.size < req.batch_size:
        raise PoolExhausted(
            f"pool of {req.pool.size} leaves {remaining.size} candidates after "
            f"clipping, batch of {req.batch_size} requested")
    return remaining[:req.batch_size]


def _ranked(req: QueryRequest, key: np.ndarray) -> np.ndarray:
    """Pool sorted by ascending key, ties by ascending sample index."""
    order = np.lexsort((req.pool, key))
    return req.pool[order]


def least_confidence(req: QueryRequest) -> np.ndarray:
    """Select where the report's uncertainty is highest."""
    if req.report is None:
        raise ValueError("least_confidence needs confidence reports")
    return _take(_ranked(req, -req.report.uncertainty), req)


def entropy_strategy(req: QueryRequest) -> np.ndarray:
    """Select where the class distribution's entropy is highest (0 ln 0 := 0)."""
    if req.report is None:
        raise ValueError("entropy_strategy needs confidence reports")
    p = req.report.class_distribution
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return _take(_ranked(req, terms.sum(axis=1)), req)


def margin_strategy(req: QueryRequest) -> np.ndarray:
    """Select where the gap between the two most probable classes is smallest."""
    if req.report is None:
        raise ValueError("margin_strategy needs confidence reports")
    p = req.report.class_distribution
    if p.shape[1] < 2:
        raise ValueError("margin needs at least two classes")
    k = p.shape[1]
    top2 = np.partition(p, (k - 2, k - 1), axis=1)[:, -2:]
    margin = top2[:, 1] - top2[:, 0]
    return _take(_ranked(req, margin), req)


def random_strategy(req: QueryRequest) -> np.ndarray:
    """Uniform draw without replacement; clipping is a no-op (nothing is ranked)."""
    if req.seed is None:
        raise ValueError("random_strategy needs a seed")
    if req.batch_size > req.pool.size:
        raise PoolExhausted(
            f"batch of {req.batch_size} requested from pool of {req.pool.size}")
    rng = np.random.default_rng(req.seed)
    return rng.choice(req.pool, size=req.batch_size, replace=False)
