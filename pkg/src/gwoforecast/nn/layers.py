"""Layers with explicit forward/backward passes.

Arrays keep the dtype they arrive in: float64 in normal use, long double
inside the gradient checker's oracle. Every layer caches what it needs
during ``forward`` and consumes that cache in ``backward``. Parameters and their gradients live in ``params`` /
``grads`` dicts with matching keys and shapes.
"""

from __future__ import annotations

import numpy as np


class InvalidStateError(RuntimeError):
    pass


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _check_last_dim(x: np.ndarray, expected: int, ndim: int | None, layer: str) -> None:
    if (ndim is not None and x.ndim != ndim) or x.shape[-1] != expected:
        want = f"(..., {expected})" if ndim is None else "(" + ", ".join(["·"] * (ndim - 1) + [str(expected)]) + ")"
        raise ValueError(f"{layer}: input shape {x.shape} does not match expected {want}")


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def init(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise InvalidStateError(f"{type(self).__name__}.backward called without a preceding train-mode forward")
        return self._cache

    def zero_grads(self) -> None:
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def sublayers(self) -> list["Layer"]:
        return []

    def config(self) -> dict:
        return {"kind": type(self).__name__}


class Dense(Layer):
    """Affine map on the last axis, optionally followed by relu."""

    def __init__(self, in_features: int, units: int, activation: str = "linear"):
        super().__init__()
        if activation not in ("linear", "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.in_features = in_features
        self.units = units
        self.activation = activation

    def init(self, rng):
        self.params = {
            "W": _uniform(rng, self.in_features, (self.in_features, self.units)),
            "b": _uniform(rng, self.in_features, (self.units,)),
        }
        self.zero_grads()

    def forward(self, x, train=False, rng=None):
        _check_last_dim(x, self.in_features, None, "Dense")
        z = x @ self.params["W"] + self.params["b"]
        y = np.maximum(z, 0.0) if self.activation == "relu" else z
        self._cache = (x, z) if train else None
        return y

    def backward(self, dy):
        x, z = self._take_cache()
        if self.activation == "relu":
            dy = dy * (z > 0)
        x2 = x.reshape(-1, self.in_features)
        dy2 = dy.reshape(-1, self.units)
        self.grads["W"] += x2.T @ dy2
        self.grads["b"] += dy2.sum(axis=0)
        return dy @ self.params["W"].T

    def config(self):
        return {"kind": "Dense", "in_features": self.in_features, "units": self.units, "activation": self.activation}


class Dropout(Layer):
    """Inverted dropout. ``pin_mask()`` freezes the last mask for gradient checks."""

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.mask: np.ndarray | None = None
        self.pinned = False

    def pin_mask(self, pinned: bool = True) -> None:
        self.pinned = pinned

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._cache = ("identity",) if train else None
            return x
        if not (self.pinned and self.mask is not None and self.mask.shape == x.shape):
            if rng is None:
                raise ValueError("Dropout in train mode needs an rng")
            self.mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        self._cache = ("mask",)
        return x * self.mask

    def backward(self, dy):
        (kind,) = self._take_cache()
        return dy if kind == "identity" else dy * self.mask

    def config(self):
        return {"kind": "Dropout", "rate": self.rate}


class Conv1d(Layer):
    """Same-padded 1-D convolution over the time axis with relu; (B, T, C_in) -> (B, T, C_out)."""

    def __init__(self, in_channels: int, channels: int, kernel_size: int = 3):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd for symmetric same padding")
        self.in_channels = in_channels
        self.channels = channels
        self.kernel_size = kernel_size

    def init(self, rng):
        fan_in = self.kernel_size * self.in_channels
        self.params = {
            "W": _uniform(rng, fan_in, (fan_in, self.channels)),
            "b": _uniform(rng, fan_in, (self.channels,)),
        }
        self.zero_grads()

    def _columns(self, x):
        B, T, C = x.shape
        pad = self.kernel_size // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        return np.concatenate([xp[:, k:k + T, :] for k in range(self.kernel_size)], axis=2)

    def forward(self, x, train=False, rng=None):
        _check_last_dim(x, self.in_channels, 3, "Conv1d")
        cols = self._columns(x)
        z = cols @ self.params["W"] + self.params["b"]
        self._cache = (cols, z) if train else None
        return np.maximum(z, 0.0)

    def backward(self, dy):
        cols, z = self._take_cache()
        dz = dy * (z > 0)
        B, T, _ = dz.shape
        self.grads["W"] += cols.reshape(B * T, -1).T @ dz.reshape(B * T, -1)
        self.grads["b"] += dz.sum(axis=(0, 1))
        dcols = dz @ self.params["W"].T
        pad = self.kernel_size // 2
        dxp = np.zeros((B, T + 2 * pad, self.in_channels), dtype=dz.dtype)
        C = self.in_channels
        for k in range(self.kernel_size):
            dxp[:, k:k + T, :] += dcols[:, :, k * C:(k + 1) * C]
        return dxp[:, pad:pad + T, :]

    def config(self):
        return {"kind": "Conv1d", "in_channels": self.in_channels, "channels": self.channels,
                "kernel_size": self.kernel_size}


class DotAttention(Layer):
    """Scaled dot-product attention over time, queried by the last time step.

    (B, T, D) -> (B, D) context vector.
    """

    def __init__(self, features: int):
        super().__init__()
        self.features = features

    def forward(self, x, train=False, rng=None):
        _check_last_dim(x, self.features, 3, "DotAttention")
        scale = 1.0 / np.sqrt(self.features)
        q = x[:, -1, :]
        s = np.einsum("btd,bd->bt", x, q) * scale
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        alpha = e / e.sum(axis=1, keepdims=True)
        ctx = np.einsum("bt,btd->bd", alpha, x)
        self._cache = (x, alpha) if train else None
        return ctx

    def backward(self, dctx):
        x, alpha = self._take_cache()
        scale = 1.0 / np.sqrt(self.features)
        q = x[:, -1, :]
        dx = alpha[:, :, None] * dctx[:, None, :]
        dalpha = np.einsum("btd,bd->bt", x, dctx)
        ds = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        dx += ds[:, :, None] * q[:, None, :] * scale
        dx[:, -1, :] += np.einsum("bt,btd->bd", ds, x) * scale
        return dx

    def config(self):
        return {"kind": "DotAttention", "features": self.features}


class RepeatSteps(Layer):
    """(B, D) -> (B, steps, D)."""

    def __init__(self, steps: int):
        super().__init__()
        self.steps = steps

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2:
            raise ValueError(f"RepeatSteps: input shape {x.shape} does not match expected (·, ·)")
        self._cache = (True,) if train else None
        return np.repeat(x[:, None, :], self.steps, axis=1)

    def backward(self, dy):
        self._take_cache()
        return dy.sum(axis=1)

    def config(self):
        return {"kind": "RepeatSteps", "steps": self.steps}


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        self._cache = x.shape if train else None
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._take_cache())
