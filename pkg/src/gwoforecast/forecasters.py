"""The five recurrent forecasting architectures behind one build/fit/predict surface."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from .data import FeatureSet, WindowedDataset
from .nn import (OPTIMIZER_KINDS, Bidirectional, Conv1d, Dense, DotAttention, Dropout, Flatten, LSTM,
                 OptimizerSpec, RepeatSteps, Sequential, TrainConfig, TrainReport, train)

HORIZON = 3


class ArchitectureId(str, enum.Enum):
    BI_LSTM = "bi_lstm"
    BI_GRU = "bi_gru"
    CNN_BI_LSTM = "cnn_bi_lstm"
    CNN_BI_LSTM_ATT = "cnn_bi_lstm_att"
    ENCDEC_BI_LSTM = "encdec_bi_lstm"

    @classmethod
    def parse(cls, value: "str | ArchitectureId") -> "ArchitectureId":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            try:
                return cls[str(value).upper()]
            except KeyError:
                raise ValueError(f"unknown architecture {value!r}; expected one of "
                                 f"{[a.value for a in cls]}") from None


ARCH_LABELS = {
    ArchitectureId.BI_LSTM: "Bi-LSTM",
    ArchitectureId.BI_GRU: "Bi-GRU",
    ArchitectureId.CNN_BI_LSTM: "CNN-Bi-LSTM",
    ArchitectureId.CNN_BI_LSTM_ATT: "CNN-Bi-LSTM-Att",
    ArchitectureId.ENCDEC_BI_LSTM: "encoder-decoder-Bi-LSTM",
}

FEATURE_PREFIX = {
    FeatureSet.NONE: "",
    FeatureSet.USDX: "USDX-",
    FeatureSet.SENT: "SENT-",
    FeatureSet.BOTH: "SENT-USD-",
}


def model_label(arch: ArchitectureId, features: FeatureSet) -> str:
    """E.g. ``SENT-Bi-GRU`` or ``SENT-USD-encoder-decoder-Bi-LSTM``."""
    return FEATURE_PREFIX[FeatureSet(features)] + ARCH_LABELS[ArchitectureId.parse(arch)]


@dataclass(frozen=True)
class HyperParams:
    learning_rate: float
    hidden_exponent: int
    optimizer: str
    dropout: float
    window: int
    features: FeatureSet

    def __post_init__(self):
        object.__setattr__(self, "features", FeatureSet(self.features))
        if not 1e-4 <= self.learning_rate <= 0.1:
            raise ValueError(f"learning_rate {self.learning_rate} outside [0.0001, 0.1]")
        if not 1 <= self.hidden_exponent <= 8:
            raise ValueError(f"hidden_exponent {self.hidden_exponent} outside [1, 8]")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.2 <= self.dropout <= 0.5:
            raise ValueError(f"dropout {self.dropout} outside [0.2, 0.5]")
        if not 3 <= self.window <= 30:
            raise ValueError(f"window {self.window} outside [3, 30]")

    @property
    def hidden(self) -> int:
        return 2 ** self.hidden_exponent

    def optimizer_spec(self) -> OptimizerSpec:
        return OptimizerSpec(self.optimizer, self.learning_rate)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["features"] = self.features.name
        d["hidden_units"] = self.hidden
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(float(d["learning_rate"]), int(d["hidden_exponent"]), d["optimizer"], float(d["dropout"]),
                   int(d["window"]), FeatureSet[d["features"]])


def build(arch, hp: HyperParams, feature_count: int) -> Sequential:
    """Uninitialised network mapping (batch, window, feature_count) -> (batch, 3)."""
    arch = ArchitectureId.parse(arch)
    h, rate = hp.hidden, hp.dropout
    if arch in (ArchitectureId.BI_LSTM, ArchitectureId.BI_GRU):
        cell = "lstm" if arch is ArchitectureId.BI_LSTM else "gru"
        layers = [
            Bidirectional(cell, feature_count, h, return_sequences=False), Dropout(rate),
            Dense(2 * h, h, "relu"),
            Dense(h, h, "relu"),
            Dense(h, HORIZON),
        ]
    elif arch in (ArchitectureId.CNN_BI_LSTM, ArchitectureId.CNN_BI_LSTM_ATT):
        attend = arch is ArchitectureId.CNN_BI_LSTM_ATT
        layers = [
            Conv1d(feature_count, h), Dropout(rate),
            Conv1d(h, h), Dropout(rate),
            Bidirectional("lstm", h, h, return_sequences=True), Dropout(rate),
            Bidirectional("lstm", 2 * h, h, return_sequences=attend), Dropout(rate),
        ]
        if attend:
            layers.append(DotAttention(2 * h))
        layers.append(Dense(2 * h, HORIZON))
    elif arch is ArchitectureId.ENCDEC_BI_LSTM:
        layers = [
            Bidirectional("lstm", feature_count, h, return_sequences=True), Dropout(rate),
            Bidirectional("lstm", 2 * h, h, return_sequences=False), Dropout(rate),
            RepeatSteps(HORIZON),
            LSTM(2 * h, h, return_sequences=True), Dropout(rate),
            Dense(h, 1),
            Flatten(),
        ]
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown architecture {arch!r}")
    return Sequential(layers, input_shape=(hp.window, feature_count))


def fit(model: Sequential, data: WindowedDataset, hp: HyperParams, config: TrainConfig,
        validation: WindowedDataset | None = None) -> TrainReport:
    if model.input_shape is not None and data.X.shape[1:] != tuple(model.input_shape):
        raise ValueError(f"dataset windows {data.X.shape[1:]} do not match model input {tuple(model.input_shape)}")
    val = (validation.X, validation.Y) if validation is not None else None
    return train(model, data.X, data.Y, config, hp.optimizer_spec(), validation=val)


@dataclass
class ForecastMatrix:
    values: np.ndarray
    model_label: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, HORIZON)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def predict(model: Sequential, X: np.ndarray, label: str = "") -> ForecastMatrix:
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        return ForecastMatrix(np.empty((0, HORIZON)), label)
    out = np.concatenate([model.predict(X[s:s + 512]) for s in range(0, len(X), 512)])
    return ForecastMatrix(out, label)
