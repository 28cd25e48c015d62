from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import Conv1d, Dense, DotAttention, Dropout, Flatten, InvalidStateError, Layer, RepeatSteps
from .recurrent import GRU, LSTM, Bidirectional


class Sequential:
    """A chain of layers sharing one forward/backward pass."""

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...] | None = None):
        self.layers = list(layers)
        self.input_shape = input_shape
        self._forwarded = False

    def init(self, rng: np.random.Generator) -> "Sequential":
        for layer in self.layers:
            layer.init(rng)
        return self

    def _leaves(self) -> list[Layer]:
        out = []

        def walk(layer):
            subs = layer.sublayers()
            if subs:
                for s in subs:
                    walk(s)
            else:
                out.append(layer)

        for layer in self.layers:
            walk(layer)
        return out

    def parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """(name, param, grad) triples in a fixed order."""
        out = []
        for idx, layer in enumerate(self._leaves()):
            for key in sorted(layer.params):
                out.append((f"{idx}.{type(layer).__name__}.{key}", layer.params[key], layer.grads[key]))
        return out

    def parameter_count(self) -> int:
        return sum(p.size for _, p, _ in self.parameters())

    def zero_grads(self) -> None:
        for layer in self._leaves():
            for g in layer.grads.values():
                g[...] = 0.0

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x)
        if x.dtype.kind != "f":
            x = x.astype(np.float64)
        if self.input_shape is not None and tuple(x.shape[1:]) != tuple(self.input_shape):
            raise ValueError(f"input shape {x.shape} does not match expected (·, {', '.join(map(str, self.input_shape))})")
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        self._forwarded = train
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the gradient w.r.t. the input."""
        if not self._forwarded:
            raise InvalidStateError("backward requires a preceding train-mode forward pass")
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, train=False)

    def get_weights(self) -> list[np.ndarray]:
        return [p.copy() for _, p, _ in self.parameters()]

    def set_weights(self, weights: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(weights) != len(params):
            raise ValueError(f"expected {len(params)} tensors, got {len(weights)}")
        for (name, p, _), w in zip(params, weights):
            if p.shape != w.shape:
                raise ValueError(f"{name}: shape {w.shape} does not match {p.shape}")
            p[...] = w

    def config(self) -> dict:
        return {"input_shape": list(self.input_shape) if self.input_shape else None,
                "layers": [layer.config() for layer in self.layers]}

    def save(self, path: str | Path) -> None:
        """Write ``<path>.json`` (architecture) and ``<path>.npz`` (row-major parameters)."""
        path = Path(path)
        params = self.parameters()
        path.with_suffix(".json").write_text(json.dumps(
            {**self.config(), "parameters": [{"name": n, "shape": list(p.shape)} for n, p, _ in params]}, indent=2))
        np.savez(path.with_suffix(".npz"), *[p for _, p, _ in params])

    @classmethod
    def load(cls, path: str | Path) -> "Sequential":
        path = Path(path)
        cfg = json.loads(path.with_suffix(".json").read_text())
        net = cls([layer_from_config(c) for c in cfg["layers"]],
                  tuple(cfg["input_shape"]) if cfg["input_shape"] else None)
        net.init(np.random.default_rng(0))
        with np.load(path.with_suffix(".npz")) as data:
            net.set_weights([data[f"arr_{i}"] for i in range(len(data.files))])
        return net


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind == "Bidirectional":
        return Bidirectional(cfg["cell"], cfg["in_features"], cfg["hidden"], cfg["return_sequences"])
    factories = {"Dense": Dense, "Dropout": Dropout, "Conv1d": Conv1d, "DotAttention": DotAttention,
                 "RepeatSteps": RepeatSteps, "Flatten": Flatten, "LSTM": LSTM, "GRU": GRU}
    if kind not in factories:
        raise ValueError(f"unknown layer kind {kind!r}")
    return factories[kind](**cfg)
