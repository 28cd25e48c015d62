from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import Dropout
from .network import Sequential
from .optimizers import Optimizer, OptimizerSpec


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite loss for the whole of epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if not 0.0 < self.validation_fraction < 0.5:
            raise ValueError("validation_fraction must lie in (0, 0.5)")


@dataclass
class TrainReport:
    epochs_run: int
    best_validation_mse: float
    train_loss_curve: list[float] = field(default_factory=list)
    validation_curve: list[float] = field(default_factory=list)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    diff = pred - target
    return np.mean(diff * diff), 2.0 * diff / diff.size


class EarlyStopping:
    """Tracks the best validation score; ``update`` returns True once patience runs out."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.stale = 0

    def update(self, epoch: int, value: float) -> bool:
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def _batched_mse(net: Sequential, X: np.ndarray, Y: np.ndarray, batch: int = 256) -> float:
    total = 0.0
    for s in range(0, len(X), batch):
        d = net.predict(X[s:s + batch]) - Y[s:s + batch]
        total += float(np.sum(d * d))
    return total / Y.size


def train(
    net: Sequential,
    X: np.ndarray,
    Y: np.ndarray,
    config: TrainConfig,
    optimizer: OptimizerSpec,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
) -> TrainReport:
    """Mini-batch training with early stopping; leaves ``net`` at its best-validation weights.

    Without an explicit ``validation`` pair the chronologically last
    ``config.validation_fraction`` of (X, Y) is held out.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("training set is empty")
    if validation is None:
        n_val = max(1, int(round(len(X) * config.validation_fraction)))
        if n_val >= len(X):
            raise ValueError("training set too small to hold out a validation slice")
        Xv, Yv = X[-n_val:], Y[-n_val:]
        X, Y = X[:-n_val], Y[:-n_val]
    else:
        Xv, Yv = (np.asarray(a, dtype=np.float64) for a in validation)

    rng = np.random.default_rng(config.seed)
    net.init(rng)
    opt = Optimizer(optimizer)
    stopper = EarlyStopping(config.patience)
    best_weights = net.get_weights()
    losses, val_curve = [], []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(X))
        batch_losses = []
        for s in range(0, len(X), config.batch_size):
            idx = order[s:s + config.batch_size]
            net.zero_grads()
            pred = net.forward(X[idx], train=True, rng=rng)
            loss, grad = mse_loss(pred, Y[idx])
            batch_losses.append(loss)
            if not np.isfinite(loss):
                continue
            net.backward(grad)
            params = net.parameters()
            opt.step([p for _, p, _ in params], [g for _, _, g in params])
        finite = [v for v in batch_losses if np.isfinite(v)]
        if not finite:
            raise TrainingDiverged(epoch)
        losses.append(float(np.mean(finite)))
        val = _batched_mse(net, Xv, Yv)
        if not np.isfinite(val):
            val = np.inf
        val_curve.append(val)
        if val < stopper.best:
            best_weights = net.get_weights()
        if stopper.update(epoch, val):
            break
    if not np.isfinite(stopper.best):
        raise TrainingDiverged(epoch)
    net.set_weights(best_weights)
    return TrainReport(epoch, float(stopper.best), losses, val_curve)


def _pin_dropout(net: Sequential, pinned: bool) -> None:
    for layer in net.layers:
        if isinstance(layer, Dropout):
            layer.pin_mask(pinned)


def _cast_copy(net: Sequential, dtype) -> Sequential:
    twin = copy.deepcopy(net)
    for leaf in twin._leaves():
        leaf.params = {k: v.astype(dtype) for k, v in leaf.params.items()}
        leaf.zero_grads()
    return twin


def grad_check(
    net: Sequential,
    x: np.ndarray,
    eps: float = 1e-5,
    target: np.ndarray | None = None,
    seed: int = 0,
    include_input: bool = True,
    oracle_dtype=np.longdouble,
) -> float:
    """Largest elementwise relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, 1e-12)``. The loss is MSE
    against ``target`` (a fixed random tensor by default) with the network
    in train mode; dropout masks are drawn once and then held fixed.

    Analytic gradients come from ``net`` itself in float64. The central
    differences are evaluated on a copy cast to ``oracle_dtype`` (extended
    precision by default) so that rounding in the loss does not swamp
    gradient entries near 1e-8. ``include_input`` also checks the gradient
    with respect to ``x``, the only check parameter-free layers get.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=np.float64)
    _pin_dropout(net, False)
    out = net.forward(x, train=True, rng=rng)
    if target is None:
        target = np.random.default_rng(seed + 1).normal(size=out.shape)
    _pin_dropout(net, True)
    try:
        net.zero_grads()
        _, g = mse_loss(net.forward(x, train=True, rng=rng), target)
        dx = net.backward(g)
        analytic = [grad for _, _, grad in net.parameters()]

        twin = _cast_copy(net, oracle_dtype)
        xo = x.astype(oracle_dtype)
        to = np.asarray(target).astype(oracle_dtype)
        perturbed = [p for _, p, _ in twin.parameters()]
        if include_input:
            analytic.append(dx)
            perturbed.append(xo)

        def loss() -> float:
            return mse_loss(twin.forward(xo, train=True, rng=rng), to)[0]

        worst = 0.0
        step = oracle_dtype(eps)
        for p, grad in zip(perturbed, analytic):
            flat = p.reshape(-1)
            a_flat = grad.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                up = loss()
                flat[k] = orig - step
                down = loss()
                flat[k] = orig
                numeric = float((up - down) / (2 * step))
                a = float(a_flat[k])
                worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-12))
        return worst
    finally:
        _pin_dropout(net, False)
