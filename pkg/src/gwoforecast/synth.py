"""Synthetic stand-in for the Brent / USDX / SENT daily data.

BRENT is a slowly drifting level plus two seasonal sines plus noise. SENT is
an AR(1) sentiment signal that moves the price two days later, and USDX moves
against BRENT with its own noise.
"""

from __future__ import annotations

import csv
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .data import AlignedFrame

DEFAULT_ROWS = 800
DEFAULT_SEED = 7


def business_days(start: date, count: int) -> list[date]:
    out, d = [], start
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def synthetic_frame(rows: int = DEFAULT_ROWS, seed: int = DEFAULT_SEED,
                    start: date = date(2012, 1, 3)) -> AlignedFrame:
    rng = np.random.default_rng(seed)
    t = np.arange(rows, dtype=np.float64)
    sent = np.zeros(rows)
    for i in range(1, rows):
        sent[i] = 0.9 * sent[i - 1] + rng.normal(scale=0.3)
    # Slow bounded drift, plus sentiment acting on the price two days later.
    level = 5.0 * np.sin(2 * np.pi * t / 310.0 + 0.5) + 1.5 * np.concatenate([[0.0, 0.0], sent[:-2]])
    brent = 70.0 + level + 8.0 * np.sin(2 * np.pi * t / 45.0) + 4.0 * np.sin(2 * np.pi * t / 17.0 + 1.0)
    brent += rng.normal(scale=0.3, size=rows)
    usdx = 95.0 - 0.2 * (brent - 70.0) + rng.normal(scale=0.4, size=rows)
    return AlignedFrame(tuple(business_days(start, rows)), {"BRENT": brent, "USDX": usdx, "SENT": sent})


def noisy_sine_frame(rows: int = 400, period: float = 20.0, noise: float = 0.1, ar: float = 0.0, seed: int = 0,
                     start: date = date(2012, 1, 3)) -> tuple[AlignedFrame, np.ndarray]:
    """BRENT = 10 + sin(2πt/period) + AR(1) noise; USDX and SENT are unrelated noise.

    Returns the frame and the noise component added to BRENT.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(rows, dtype=np.float64)
    eps = np.zeros(rows)
    eps[0] = rng.normal(scale=noise / np.sqrt(1.0 - ar * ar))
    for i in range(1, rows):
        eps[i] = ar * eps[i - 1] + rng.normal(scale=noise)
    brent = 10.0 + np.sin(2 * np.pi * t / period) + eps
    cols = {"BRENT": brent, "USDX": rng.normal(size=rows), "SENT": rng.normal(size=rows)}
    return AlignedFrame(tuple(business_days(start, rows)), cols), eps


def write_synthetic(out_dir: str | Path, rows: int = DEFAULT_ROWS, seed: int = DEFAULT_SEED) -> dict[str, Path]:
    """Write ``brent.csv``, ``usdx.csv`` and ``sent.csv`` (``date,value``) into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = synthetic_frame(rows, seed)
    paths = {}
    for name in ("BRENT", "USDX", "SENT"):
        path = out_dir / f"{name.lower()}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "value"])
            for d, v in zip(frame.dates, frame.columns[name]):
                w.writerow([d.isoformat(), repr(float(v))])
        paths[name.lower()] = path
    return paths
