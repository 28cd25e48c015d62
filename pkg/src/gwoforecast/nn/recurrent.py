"""LSTM and GRU layers with backpropagation through time, plus a bidirectional wrapper."""

from __future__ import annotations

import numpy as np

from .layers import Layer, _check_last_dim, _uniform, sigmoid


class _Recurrent(Layer):
    def __init__(self, in_features: int, hidden: int, return_sequences: bool = True, reverse: bool = False):
        super().__init__()
        if hidden < 1:
            raise ValueError("hidden units must be >= 1")
        self.in_features = in_features
        self.hidden = hidden
        self.return_sequences = return_sequences
        self.reverse = reverse

    def _order(self, x):
        return x[:, ::-1, :] if self.reverse else x

    def _emit(self, hs):
        if self.return_sequences:
            return self._order(hs)
        return hs[:, -1, :]

    def _upstream(self, dy, shape):
        if self.return_sequences:
            return self._order(dy)
        dhs = np.zeros(shape, dtype=dy.dtype)
        dhs[:, -1, :] = dy
        return dhs

    def config(self):
        return {"kind": type(self).__name__, "in_features": self.in_features, "hidden": self.hidden,
                "return_sequences": self.return_sequences, "reverse": self.reverse}


class LSTM(_Recurrent):
    """Gates ordered input, forget, output, candidate along the 4H axis."""

    def init(self, rng):
        H = self.hidden
        self.params = {
            "Wx": _uniform(rng, self.in_features, (self.in_features, 4 * H)),
            "Wh": _uniform(rng, H, (H, 4 * H)),
            "b": _uniform(rng, H, (4 * H,)),
        }
        self.zero_grads()

    def forward(self, x, train=False, rng=None):
        _check_last_dim(x, self.in_features, 3, "LSTM")
        xs = self._order(x)
        B, T, _ = xs.shape
        H = self.hidden
        Wh = self.params["Wh"]
        xw = xs @ self.params["Wx"] + self.params["b"]
        h = np.zeros((B, H), dtype=xs.dtype)
        c = np.zeros((B, H), dtype=xs.dtype)
        hs = np.empty((B, T, H), dtype=xs.dtype)
        gates = np.empty((B, T, 4 * H), dtype=xs.dtype)
        cs = np.empty((B, T + 1, H), dtype=xs.dtype)
        cs[:, 0] = 0.0
        for t in range(T):
            z = xw[:, t] + h @ Wh
            sg = sigmoid(z[:, :3 * H])
            g = np.tanh(z[:, 3 * H:])
            c = sg[:, H:2 * H] * c + sg[:, :H] * g
            h = sg[:, 2 * H:] * np.tanh(c)
            hs[:, t] = h
            gates[:, t, :3 * H] = sg
            gates[:, t, 3 * H:] = g
            cs[:, t + 1] = c
        self._cache = (xs, hs, gates, cs) if train else None
        return self._emit(hs)

    def backward(self, dy):
        xs, hs, gates, cs = self._take_cache()
        B, T, _ = xs.shape
        H = self.hidden
        WhT = self.params["Wh"].T
        dhs = self._upstream(dy, hs.shape)
        i, f, o, g = (gates[:, :, k * H:(k + 1) * H] for k in range(4))
        tc = np.tanh(cs[:, 1:])
        # Local derivatives for every step at once; the loop only carries dh, dc.
        dc_from_h = o * (1.0 - tc * tc)
        di = g * i * (1.0 - i)
        df = cs[:, :-1] * f * (1.0 - f)
        do = tc * o * (1.0 - o)
        dg = i * (1.0 - g * g)
        dZ = np.empty((B, T, 4 * H), dtype=xs.dtype)
        dh_next = np.zeros((B, H), dtype=xs.dtype)
        dc_next = np.zeros((B, H), dtype=xs.dtype)
        for t in range(T - 1, -1, -1):
            dh = dhs[:, t] + dh_next
            dc = dh * dc_from_h[:, t] + dc_next
            dz = dZ[:, t]
            dz[:, :H] = dc * di[:, t]
            dz[:, H:2 * H] = dc * df[:, t]
            dz[:, 2 * H:3 * H] = dh * do[:, t]
            dz[:, 3 * H:] = dc * dg[:, t]
            dc_next = dc * f[:, t]
            dh_next = dz @ WhT
        h_prev = np.concatenate([np.zeros((B, 1, H), dtype=xs.dtype), hs[:, :-1]], axis=1)
        dZ2 = dZ.reshape(B * T, 4 * H)
        self.grads["Wh"] += h_prev.reshape(B * T, H).T @ dZ2
        self.grads["Wx"] += xs.reshape(B * T, -1).T @ dZ2
        self.grads["b"] += dZ2.sum(axis=0)
        return self._order(dZ @ self.params["Wx"].T)


class GRU(_Recurrent):
    """Update/reset gates z, r; candidate n = tanh(x Wn + (r * h) Un + bn); h' = (1 - z) n + z h."""

    def init(self, rng):
        H = self.hidden
        self.params = {
            "Wx": _uniform(rng, self.in_features, (self.in_features, 3 * H)),
            "Wh": _uniform(rng, H, (H, 2 * H)),
            "Un": _uniform(rng, H, (H, H)),
            "b": _uniform(rng, H, (3 * H,)),
        }
        self.zero_grads()

    def forward(self, x, train=False, rng=None):
        _check_last_dim(x, self.in_features, 3, "GRU")
        xs = self._order(x)
        B, T, _ = xs.shape
        H = self.hidden
        Wh, Un = self.params["Wh"], self.params["Un"]
        xw = xs @ self.params["Wx"] + self.params["b"]
        h = np.zeros((B, H), dtype=xs.dtype)
        hs = np.empty((B, T, H), dtype=xs.dtype)
        if train:
            gates = np.empty((B, T, 3 * H), dtype=xs.dtype)
        for t in range(T):
            zr = sigmoid(xw[:, t, :2 * H] + h @ Wh)
            z, r = zr[:, :H], zr[:, H:]
            n = np.tanh(xw[:, t, 2 * H:] + (r * h) @ Un)
            h = (1.0 - z) * n + z * h
            hs[:, t] = h
            if train:
                gates[:, t, :2 * H] = zr
                gates[:, t, 2 * H:] = n
        self._cache = (xs, hs, gates) if train else None
        return self._emit(hs)

    def backward(self, dy):
        xs, hs, gates = self._take_cache()
        B, T, _ = xs.shape
        H = self.hidden
        Wh, Un = self.params["Wh"], self.params["Un"]
        dhs = self._upstream(dy, hs.shape)
        h_prev = np.concatenate([np.zeros((B, 1, H), dtype=xs.dtype), hs[:, :-1]], axis=1)
        dA = np.empty((B, T, 3 * H), dtype=xs.dtype)
        dh_next = np.zeros((B, H), dtype=xs.dtype)
        for t in range(T - 1, -1, -1):
            z, r, n = gates[:, t, :H], gates[:, t, H:2 * H], gates[:, t, 2 * H:]
            hp = h_prev[:, t]
            dh = dhs[:, t] + dh_next
            dan = dh * (1.0 - z) * (1.0 - n * n)
            drh = dan @ Un.T
            dA[:, t, :H] = dh * (hp - n) * z * (1.0 - z)
            dA[:, t, H:2 * H] = drh * hp * r * (1.0 - r)
            dA[:, t, 2 * H:] = dan
            dh_next = dh * z + drh * r + dA[:, t, :2 * H] @ Wh.T
        dA2 = dA.reshape(B * T, 3 * H)
        hp2 = h_prev.reshape(B * T, H)
        rh2 = (gates[:, :, H:2 * H] * h_prev).reshape(B * T, H)
        self.grads["Wh"] += hp2.T @ dA2[:, :2 * H]
        self.grads["Un"] += rh2.T @ dA2[:, 2 * H:]
        self.grads["Wx"] += xs.reshape(B * T, -1).T @ dA2
        self.grads["b"] += dA2.sum(axis=0)
        return self._order(dA @ self.params["Wx"].T)


RECURRENT_KINDS = {"lstm": LSTM, "gru": GRU}


class Bidirectional(Layer):
    """Forward and time-reversed passes concatenated on the feature axis.

    With ``return_sequences`` the output is (B, T, 2H), aligned per time step;
    otherwise (B, 2H) holding each direction's final state.
    """

    def __init__(self, kind: str, in_features: int, hidden: int, return_sequences: bool = True):
        super().__init__()
        cls = RECURRENT_KINDS[kind]
        self.kind = kind
        self.in_features = in_features
        self.hidden = hidden
        self.return_sequences = return_sequences
        self.forward_layer = cls(in_features, hidden, return_sequences, reverse=False)
        self.backward_layer = cls(in_features, hidden, return_sequences, reverse=True)

    def sublayers(self):
        return [self.forward_layer, self.backward_layer]

    def init(self, rng):
        self.forward_layer.init(rng)
        self.backward_layer.init(rng)

    def zero_grads(self):
        self.forward_layer.zero_grads()
        self.backward_layer.zero_grads()

    def forward(self, x, train=False, rng=None):
        yf = self.forward_layer.forward(x, train, rng)
        yb = self.backward_layer.forward(x, train, rng)
        return np.concatenate([yf, yb], axis=-1)

    def backward(self, dy):
        H = self.hidden
        return self.forward_layer.backward(dy[..., :H]) + self.backward_layer.backward(dy[..., H:])

    def config(self):
        return {"kind": "Bidirectional", "cell": self.kind, "in_features": self.in_features,
                "hidden": self.hidden, "return_sequences": self.return_sequences}
