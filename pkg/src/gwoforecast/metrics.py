"""Point-forecast accuracy metrics.

Multi-step (N, horizon) inputs are flattened row-major, so each metric is a
single scalar over every forecast step.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

ZERO_TARGET_TOL = 1e-12


class UndefinedVariance(ValueError):
    pass


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.size} targets vs {y_hat.size} predictions")
    if y.size == 0:
        raise ValueError("empty input")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_hat))):
        raise ValueError("non-finite entries")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def rmse(y, y_hat) -> float:
    return float(np.sqrt(mse(y, y_hat)))


def _percentage_terms(y, y_hat) -> tuple[np.ndarray, int]:
    keep = np.abs(y) >= ZERO_TARGET_TOL
    return (y[keep] - y_hat[keep]) / y[keep], int(np.count_nonzero(~keep))


def mspe(y, y_hat, printed_formula: bool = False) -> float:
    """Mean squared percentage error, mean of ((y - y_hat) / y)^2.

    Targets with ``|y| < 1e-12`` are skipped. ``printed_formula=True``
    returns the plain mean squared error instead.
    """
    y, y_hat = _pair(y, y_hat)
    if printed_formula:
        return float(np.mean((y - y_hat) ** 2))
    terms, _ = _percentage_terms(y, y_hat)
    return float(np.mean(terms ** 2)) if terms.size else float("nan")


def mape(y, y_hat) -> float:
    """Mean of |y - y_hat| / |y| over targets with ``|y| >= 1e-12``."""
    y, y_hat = _pair(y, y_hat)
    terms, _ = _percentage_terms(y, y_hat)
    return float(np.mean(np.abs(terms))) if terms.size else float("nan")


def r2(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedVariance("R^2 undefined: targets have zero variance")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


@dataclass
class MetricReport:
    mae: float
    mse: float
    rmse: float
    mspe: float
    mape: float
    r2: float
    excluded_targets: int = 0

    FIELDS = ("mae", "mse", "rmse", "mspe", "mape", "r2")

    @classmethod
    def compute(cls, y, y_hat, printed_mspe: bool = False) -> "MetricReport":
        y, y_hat = _pair(y, y_hat)
        _, excluded = _percentage_terms(y, y_hat)
        return cls(mae(y, y_hat), mse(y, y_hat), rmse(y, y_hat), mspe(y, y_hat, printed_mspe), mape(y, y_hat),
                   r2(y, y_hat), excluded)

    def as_dict(self) -> dict:
        return asdict(self)


def write_metrics_csv(path: str | Path, rows: dict[str, MetricReport], extra: dict | None = None) -> None:
    """One row per model label; ``extra`` columns (seed, config hash) repeat on every row."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", *MetricReport.FIELDS, "excluded_targets", *extra])
        for label, rep in rows.items():
            w.writerow([label, *(f"{getattr(rep, k):.6f}" for k in MetricReport.FIELDS), rep.excluded_targets,
                        *extra.values()])
