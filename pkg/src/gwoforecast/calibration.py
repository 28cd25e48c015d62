"""Per-architecture hyperparameter, window and feature search with GWO."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import FeatureSet, PreparedData
from .forecasters import ArchitectureId, HyperParams, build, fit, model_label
from .gwo import Categorical, Continuous, GwoConfig, Integer, SearchSpace, Trace, gwo_optimize
from .nn import OPTIMIZER_KINDS, TrainConfig, TrainingDiverged


class CalibrationFailed(RuntimeError):
    pass


def calibration_space(max_hidden_exponent: int = 8, max_window: int = 30) -> SearchSpace:
    """learning rate (log10), hidden exponent, optimizer, dropout, window, feature set."""
    return SearchSpace([
        Continuous(1e-4, 0.1, log_scaled=True, name="learning_rate"),
        Integer(1, max_hidden_exponent, name="hidden_exponent"),
        Categorical(len(OPTIMIZER_KINDS), name="optimizer"),
        Continuous(0.2, 0.5, name="dropout"),
        Integer(3, max_window, name="window"),
        Categorical(len(FeatureSet), name="features"),
    ])


def decoded_to_hp(decoded) -> HyperParams:
    lr, n, opt, dropout, window, feats = decoded
    return HyperParams(float(lr), int(n), OPTIMIZER_KINDS[int(opt)], float(dropout), int(window), FeatureSet(int(feats)))


def hp_to_position(hp: HyperParams, space: SearchSpace) -> np.ndarray:
    return space.encode([hp.learning_rate, hp.hidden_exponent, OPTIMIZER_KINDS.index(hp.optimizer), hp.dropout,
                         hp.window, int(hp.features)])


def calibration_objective(arch, decoded, data: PreparedData, train_config: TrainConfig, eval_seed: int) -> float:
    """Validation MSE after training ``arch`` with the decoded configuration.

    Only the fit and validation partitions are used; divergence scores +inf.
    """
    hp = decoded if isinstance(decoded, HyperParams) else decoded_to_hp(decoded)
    fit_set, val_set, _ = data.windows(hp.features, hp.window)
    model = build(arch, hp, fit_set.feature_count)
    cfg = TrainConfig(train_config.batch_size, train_config.max_epochs, train_config.patience, eval_seed,
                      train_config.validation_fraction)
    try:
        report = fit(model, fit_set, hp, cfg, validation=val_set)
    except TrainingDiverged:
        return math.inf
    return report.best_validation_mse


def run_seeds(master_seed: int, arch: ArchitectureId, runs: int) -> list[dict[str, int]]:
    """Independent (gwo_seed, train_seed) pairs per run, derived from the master seed."""
    index = list(ArchitectureId).index(arch)
    root = np.random.SeedSequence([master_seed & ((1 << 64) - 1), index])
    out = []
    for child in root.spawn(runs):
        gwo_seed, train_seed = (int(v) for v in child.generate_state(2, np.uint64))
        out.append({"gwo_seed": gwo_seed, "train_seed": train_seed})
    return out


@dataclass
class CalibrationResult:
    arch: ArchitectureId
    best_hp: HyperParams
    best_validation_mse: float
    traces: list[Trace]
    run_seeds: list[dict[str, int]]
    run_best: list[float] = field(default_factory=list)
    best_run: int = 0

    @property
    def label(self) -> str:
        return model_label(self.arch, self.best_hp.features)

    @property
    def train_seed(self) -> int:
        return self.run_seeds[self.best_run]["train_seed"]

    def to_dict(self) -> dict:
        return {
            "arch": self.arch.value,
            "label": self.label,
            "best_hp": self.best_hp.to_dict(),
            "best_validation_mse": self.best_validation_mse,
            "best_run": self.best_run,
            "run_best": self.run_best,
            "run_seeds": self.run_seeds,
            "traces": [{"best_fitness_per_iteration": t.best_fitness_per_iteration,
                        "initial_best_fitness": t.initial_best_fitness,
                        "wall_time_seconds": t.wall_time_seconds,
                        "evaluations": t.evaluations, "failures": t.failures} for t in self.traces],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        traces = [Trace(t["best_fitness_per_iteration"], t["wall_time_seconds"], t["evaluations"],
                        t["initial_best_fitness"], t["failures"]) for t in d["traces"]]
        return cls(ArchitectureId.parse(d["arch"]), HyperParams.from_dict(d["best_hp"]), d["best_validation_mse"],
                   traces, d["run_seeds"], d["run_best"], d["best_run"])

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        Path(path).write_text(json.dumps({**self.to_dict(), **(extra or {})}, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


def calibrate(
    arch,
    data: PreparedData,
    gwo_config: GwoConfig,
    runs: int = 5,
    train_config: TrainConfig | None = None,
    space: SearchSpace | None = None,
    log=None,
) -> CalibrationResult:
    """``runs`` independent GWO searches; the best decoded configuration over all runs wins.

    ``gwo_config.seed`` is the master seed; each run gets its own GWO seed and
    one training seed shared by every candidate it evaluates.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    arch = ArchitectureId.parse(arch)
    train_config = train_config or TrainConfig()
    space = space or calibration_space()
    seeds = run_seeds(gwo_config.seed, arch, runs)
    traces, results = [], []
    for k, s in enumerate(seeds):
        cfg = GwoConfig(gwo_config.pop_size, gwo_config.iterations, s["gwo_seed"], list(gwo_config.seeded_candidates))

        def objective(decoded, _seed=s["train_seed"]):
            return calibration_objective(arch, decoded, data, train_config, _seed)

        decoded, fitness, trace = gwo_optimize(objective, space, cfg)
        traces.append(trace)
        results.append((decoded, fitness))
        if log is not None:
            log(f"{arch.value} run {k + 1}/{runs}: best val MSE {fitness:.6g} in {trace.wall_time_seconds:.1f}s")
    run_best = [f for _, f in results]
    best_run = int(np.argmin(run_best))
    if not math.isfinite(run_best[best_run]):
        raise CalibrationFailed(f"{arch.value}: every calibration run diverged")
    return CalibrationResult(arch, decoded_to_hp(results[best_run][0]), run_best[best_run], traces, seeds,
                             run_best, best_run)
