"""Daily series ingestion, calendar alignment, min-max scaling and sliding windows."""

from __future__ import annotations

import csv
import enum
import hashlib
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

HORIZON = 3
COLUMNS = ("BRENT", "USDX", "SENT")


class DataError(ValueError):
    pass


class FeatureSet(enum.IntEnum):
    NONE = 0
    USDX = 1
    SENT = 2
    BOTH = 3

    @property
    def extra_columns(self) -> tuple[str, ...]:
        return {0: (), 1: ("USDX",), 2: ("SENT",), 3: ("USDX", "SENT")}[int(self)]


@dataclass(frozen=True)
class RawSeries:
    name: str
    dates: tuple[date, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise DataError(f"{self.name}: {len(self.dates)} dates but {len(self.values)} values")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise DataError(f"{self.name}: dates not strictly increasing at {b.isoformat()}")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"{self.name}: non-finite values")

    def __len__(self) -> int:
        return len(self.dates)


def load_csv(path: str | Path, date_column: str = "date", value_column: str = "value",
             name: str | None = None) -> RawSeries:
    path = Path(path)
    name = name or path.stem
    rows: dict[date, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = {date_column, value_column} - set(reader.fieldnames)
        if missing:
            raise DataError(f"{path}: missing column(s) {sorted(missing)}")
        for row in reader:
            line = reader.line_num
            try:
                d = date.fromisoformat(row[date_column].strip())
                v = float(row[value_column])
            except (ValueError, AttributeError) as exc:
                raise DataError(f"{path}:{line}: cannot parse row ({exc})") from None
            if not math.isfinite(v):
                raise DataError(f"{path}:{line}: non-finite value")
            if d in rows:
                raise DataError(f"{path}:{line}: duplicate date {d.isoformat()}")
            rows[d] = v
    if not rows:
        raise DataError(f"{path}: no data rows")
    dates = tuple(sorted(rows))
    return RawSeries(name, dates, np.array([rows[d] for d in dates], dtype=np.float64))


@dataclass(frozen=True)
class AlignedFrame:
    dates: tuple[date, ...]
    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.dates)

    def matrix(self, names=COLUMNS) -> np.ndarray:
        return np.column_stack([self.columns[n] for n in names])

    def replace(self, columns: dict[str, np.ndarray]) -> "AlignedFrame":
        return AlignedFrame(self.dates, {k: np.asarray(v, dtype=np.float64) for k, v in columns.items()})

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", *self.columns])
            for i, d in enumerate(self.dates):
                w.writerow([d.isoformat(), *(repr(float(c[i])) for c in self.columns.values())])

    @classmethod
    def from_csv(cls, path: str | Path) -> "AlignedFrame":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        dates = tuple(date.fromisoformat(r[0]) for r in rows)
        cols = {name: np.array([float(r[j + 1]) for r in rows]) for j, name in enumerate(header[1:])}
        return cls(dates, cols)


def _forward_fill(series: RawSeries, dates: tuple[date, ...]) -> np.ndarray:
    """Value on or before each date; NaN where the series has not started yet."""
    src = np.array([d.toordinal() for d in series.dates])
    dst = np.array([d.toordinal() for d in dates])
    idx = np.searchsorted(src, dst, side="right") - 1
    out = np.full(len(dates), np.nan)
    ok = idx >= 0
    out[ok] = series.values[idx[ok]]
    return out


def align(brent: RawSeries, usdx: RawSeries, sent: RawSeries) -> AlignedFrame:
    """Keep BRENT's calendar; forward-fill the exogenous series; drop leading gaps."""
    for s in (brent, usdx, sent):
        if len(s) == 0:
            raise DataError(f"{s.name}: empty series")
    u = _forward_fill(usdx, brent.dates)
    s = _forward_fill(sent, brent.dates)
    keep = ~(np.isnan(u) | np.isnan(s))
    if not keep.any():
        raise DataError("no BRENT dates remain after dropping leading USDX/SENT gaps")
    dates = tuple(d for d, k in zip(brent.dates, keep) if k)
    return AlignedFrame(dates, {"BRENT": brent.values[keep], "USDX": u[keep], "SENT": s[keep]})


@dataclass(frozen=True)
class Normalizer:
    minimum: dict[str, float]
    maximum: dict[str, float]

    @classmethod
    def fit(cls, frame: AlignedFrame, train_row_count: int) -> "Normalizer":
        if train_row_count < 2:
            raise DataError("need at least 2 training rows to fit the normalizer")
        lo, hi = {}, {}
        for name, col in frame.columns.items():
            part = col[:train_row_count]
            lo[name], hi[name] = float(part.min()), float(part.max())
            if not hi[name] > lo[name]:
                raise DataError(f"column {name} is constant over the training rows")
        return cls(lo, hi)

    def apply_column(self, name: str, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.minimum[name]) / (self.maximum[name] - self.minimum[name])

    def invert_column(self, name: str, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * (self.maximum[name] - self.minimum[name]) + self.minimum[name]

    def apply(self, frame: AlignedFrame) -> AlignedFrame:
        return frame.replace({n: self.apply_column(n, c) for n, c in frame.columns.items()})

    def invert(self, frame: AlignedFrame) -> AlignedFrame:
        return frame.replace({n: self.invert_column(n, c) for n, c in frame.columns.items()})

    def to_dict(self) -> dict:
        return {"min": self.minimum, "max": self.maximum}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(dict(d["min"]), dict(d["max"]))


def fit_normalizer(frame: AlignedFrame, train_row_count: int) -> Normalizer:
    return Normalizer.fit(frame, train_row_count)


@dataclass(frozen=True)
class WindowedDataset:
    """X (N, window, features) and Y (N, horizon); ``target_start[i]`` is the frame row of Y[i, 0]."""

    X: np.ndarray
    Y: np.ndarray
    target_start: np.ndarray
    window: int
    horizon: int = HORIZON
    features: FeatureSet = FeatureSet.NONE

    def __len__(self) -> int:
        return len(self.X)

    @property
    def feature_count(self) -> int:
        return self.X.shape[2]

    def subset(self, idx) -> "WindowedDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return WindowedDataset(self.X[idx], self.Y[idx], self.target_start[idx], self.window, self.horizon,
                               self.features)


def make_windows(frame: AlignedFrame, features: FeatureSet, window: int, horizon: int = HORIZON) -> WindowedDataset:
    features = FeatureSet(features)
    L = len(frame)
    if L < window + horizon:
        raise DataError(f"frame has {L} rows; window {window} with horizon {horizon} needs at least {window + horizon}")
    data = frame.matrix(("BRENT",) + features.extra_columns)
    target = frame.columns["BRENT"]
    N = L - window - horizon + 1
    X = np.lib.stride_tricks.sliding_window_view(data, window, axis=0)[:N].transpose(0, 2, 1).copy()
    Y = np.lib.stride_tricks.sliding_window_view(target[window:], horizon)[:N].copy()
    return WindowedDataset(X, Y, np.arange(N) + window, window, horizon, features)


def chronological_split(dataset: WindowedDataset, test_fraction: float) -> tuple[WindowedDataset, WindowedDataset]:
    """First ceil(N(1-f)) samples train, the rest test, minus ``horizon - 1`` purged train samples.

    The purge guarantees that no row used by a train sample (inputs or
    targets) is a target row of any test sample.
    """
    if not 0.0 < test_fraction < 0.5:
        raise ValueError(f"test_fraction must lie in (0, 0.5), got {test_fraction}")
    N = len(dataset)
    n_train = math.ceil(N * (1.0 - test_fraction))
    n_fit = n_train - (dataset.horizon - 1)
    if n_fit <= 0 or n_train >= N:
        raise DataError(f"split of {N} samples at test_fraction={test_fraction} leaves an empty partition")
    return dataset.subset(np.arange(n_fit)), dataset.subset(np.arange(n_train, N))


@dataclass(frozen=True)
class SplitPlan:
    """Frame-row boundaries shared by every window size.

    Validation targets start at ``val_start``, test targets at ``test_start``.
    A sample belongs to a partition only if every row it touches precedes
    the next partition's first target row, so all models forecast the same
    validation and test targets whatever their window.
    """

    rows: int
    val_start: int
    test_start: int
    horizon: int = HORIZON

    @classmethod
    def from_fractions(cls, rows: int, test_fraction: float = 0.2, validation_fraction: float = 0.1,
                       horizon: int = HORIZON) -> "SplitPlan":
        if not 0.0 < test_fraction < 0.5 or not 0.0 < validation_fraction < 0.5:
            raise ValueError("fractions must lie in (0, 0.5)")
        test_start = int(math.floor(rows * (1.0 - test_fraction)))
        val_start = int(math.floor(test_start * (1.0 - validation_fraction)))
        return cls(rows, val_start, test_start, horizon)

    @property
    def n_val(self) -> int:
        return self.test_start - self.horizon + 1 - self.val_start

    @property
    def n_test(self) -> int:
        return self.rows - self.horizon + 1 - self.test_start

    def partition(self, ds: WindowedDataset) -> tuple[WindowedDataset, WindowedDataset, WindowedDataset]:
        last_row = ds.target_start + ds.horizon - 1
        fit = np.flatnonzero(last_row < self.val_start)
        val = np.flatnonzero((ds.target_start >= self.val_start) & (last_row < self.test_start))
        test = np.flatnonzero(ds.target_start >= self.test_start)
        if len(fit) == 0 or len(val) == 0 or len(test) == 0:
            raise DataError(f"window {ds.window}: empty partition (fit={len(fit)}, val={len(val)}, test={len(test)})")
        return ds.subset(fit), ds.subset(val), ds.subset(test)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "val_start": self.val_start, "test_start": self.test_start,
                "horizon": self.horizon, "n_val": self.n_val, "n_test": self.n_test}


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class PreparedData:
    """Raw and normalised frames plus the split they were prepared for."""

    raw: AlignedFrame
    normalized: AlignedFrame
    normalizer: Normalizer
    plan: SplitPlan
    sources: dict[str, str] = field(default_factory=dict)

    def windows(self, features: FeatureSet, window: int):
        return self.plan.partition(make_windows(self.normalized, features, window, self.plan.horizon))


def prepare(frame: AlignedFrame, test_fraction: float = 0.2, validation_fraction: float = 0.1) -> PreparedData:
    """Normalise on the rows preceding the first test target; those are the only rows training sees."""
    plan = SplitPlan.from_fractions(len(frame), test_fraction, validation_fraction)
    norm = Normalizer.fit(frame, plan.test_start)
    return PreparedData(frame, norm.apply(frame), norm, plan)
