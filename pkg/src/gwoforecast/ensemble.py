"""Convex blending of member forecasts with GWO-fitted weights."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .forecasters import ForecastMatrix
from .gwo import Continuous, GwoConfig, SearchSpace, gwo_optimize


def normalize_weights(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(raw < 0) or not np.any(raw > 0):
        raise ValueError(f"weights must be non-negative and not all zero, got {raw.tolist()}")
    return raw / raw.sum()


def _stack(forecasts: Sequence) -> np.ndarray:
    mats = [np.asarray(f.values if isinstance(f, ForecastMatrix) else f, dtype=np.float64) for f in forecasts]
    if not mats:
        raise ValueError("no forecasts to blend")
    shape = mats[0].shape
    for k, m in enumerate(mats):
        if m.shape != shape:
            raise ValueError(f"forecast {k} has shape {m.shape}, expected {shape}")
    return np.stack(mats)


def blend(forecasts: Sequence, w, label: str = "GWO-Ensemble") -> ForecastMatrix:
    """Entrywise sum of ``w[k] * forecasts[k]``."""
    stack = _stack(forecasts)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (len(stack),):
        raise ValueError(f"{len(stack)} forecasts but {w.size} weights")
    out = stack[0] * w[0]
    for k in range(1, len(stack)):
        out = out + stack[k] * w[k]
    return ForecastMatrix(out, label)


def optimize_weights(forecasts: Sequence, targets, config: GwoConfig) -> tuple[np.ndarray, float]:
    """Fit simplex weights minimising blended MSE against ``targets``.

    Searches raw weights in [0, 1]^K, normalised by their sum. The initial
    pack holds every one-hot vector plus the uniform vector, so the result is
    never worse than the best single member on this data.
    """
    stack = _stack(forecasts)
    K = len(stack)
    if K < 2:
        raise ValueError("need at least two members to blend")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != stack.shape[1:]:
        raise ValueError(f"targets shape {targets.shape} does not match forecasts {stack.shape[1:]}")
    space = SearchSpace([Continuous(0.0, 1.0, name=f"w{k}") for k in range(K)])

    def objective(raw) -> float:
        raw = np.asarray(raw)
        if not np.any(raw > 0):
            return np.inf
        pred = blend(stack, normalize_weights(raw)).values
        return float(np.mean((pred - targets) ** 2))

    seeds = [np.eye(K)[k] for k in range(K)] + [np.full(K, 1.0 / K)]
    # The pack grows if needed so that every seed fits.
    cfg = GwoConfig(max(config.pop_size, len(seeds)), config.iterations, config.seed, seeds)
    best, fitness, _ = gwo_optimize(objective, space, cfg)
    return normalize_weights(best), fitness
