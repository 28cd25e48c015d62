"""Disk-backed pipeline stages: ingest -> calibrate -> train -> blend -> evaluate -> report.

Each stage reads its prerequisites from the output directory and stamps its
own outputs with the run's config hash. A stage whose outputs already carry
the current hash is skipped, so reruns are no-ops.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CalibrationResult, calibrate, calibration_space
from .data import AlignedFrame, Normalizer, PreparedData, SplitPlan, align, file_sha256, load_csv
from .ensemble import blend, optimize_weights
from .forecasters import ArchitectureId, ForecastMatrix, build, fit, model_label, predict
from .gwo import GwoConfig
from .metrics import MetricReport, write_metrics_csv
from .nn import TrainConfig

log = logging.getLogger("gwoforecast")

REFERENCE_ENSEMBLE_MSE = 0.000127
REFERENCE_BEST_SOLUTIONS = {
    "SENT-Bi-GRU": {"mse": 0.000137, "window": 5, "learning_rate": 0.0031, "dropout": 0.3992, "hidden": 2,
                    "optimizer": "AdamW"},
    "SENT-Bi-LSTM": {"mse": 0.000194, "window": 17, "learning_rate": 0.0032, "dropout": 0.3205, "hidden": 12,
                     "optimizer": "Adam"},
    "SENT-CNN-Bi-LSTM": {"mse": 0.000280, "window": 5, "learning_rate": 0.01, "dropout": 0.3439, "hidden": 8,
                         "optimizer": "Adagrad"},
    "SENT-CNN-Bi-LSTM-Att": {"mse": 0.000300, "window": 6, "learning_rate": 0.0045, "dropout": 0.4399, "hidden": 8,
                             "optimizer": "Adam"},
    "SENT-USD-CNN-Bi-LSTM-Att": {"mse": 0.000349, "window": 10, "learning_rate": 0.0043, "dropout": 0.3140,
                                 "hidden": 4, "optimizer": "RMSprop"},
    "SENT-encoder-decoder-Bi-LSTM": {"mse": 0.000358, "window": 10, "learning_rate": 0.0060, "dropout": 0.2573,
                                     "hidden": 64, "optimizer": "Adam"},
    "SENT-USD-encoder-decoder-LSTM": {"mse": 0.000344, "window": 17, "learning_rate": 0.0080, "dropout": 0.2747,
                                      "hidden": 64, "optimizer": "AdamW"},
}


class PipelineError(RuntimeError):
    kind = "pipeline-error"

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class MissingStageError(PipelineError):
    kind = "missing-stage"


class StaleArtifactError(PipelineError):
    kind = "stale-artifact"


class LockedError(PipelineError):
    kind = "locked"


@dataclass
class RunConfig:
    brent: str = "data/brent.csv"
    usdx: str = "data/usdx.csv"
    sent: str = "data/sent.csv"
    out: str = "runs/default"
    master_seed: int = 0
    test_fraction: float = 0.2
    validation_fraction: float = 0.1
    gwo_pop: int = 10
    gwo_iterations: int = 30
    gwo_runs: int = 5
    blend_pop: int = 10
    blend_iterations: int = 100
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    max_hidden_exponent: int = 8
    max_window: int = 30
    models: list[str] = field(default_factory=lambda: [a.value for a in ArchitectureId])
    ensemble_members: list[str] | None = None

    # Fields that only select what to run; they do not change any artifact's content.
    _UNHASHED = ("out", "models", "ensemble_members")

    def __post_init__(self):
        if not 0 < self.test_fraction < 0.5 or not 0 < self.validation_fraction < 0.5:
            raise ValueError("split fractions must lie in (0, 0.5)")
        self.models = [ArchitectureId.parse(m).value for m in self.models]

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        path = Path(path)
        raw = json.loads(path.read_text())
        unknown = set(raw) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("brent", "usdx", "sent", "out"):
            if key in raw and not Path(raw[key]).is_absolute():
                raw[key] = str((path.parent / raw[key]).resolve())
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of the settings and input-file contents every artifact depends on."""
        d = {k: v for k, v in self.to_dict().items() if k not in self._UNHASHED}
        for key in ("brent", "usdx", "sent"):
            p = Path(d[key])
            d[key] = file_sha256(p) if p.exists() else f"missing:{p}"
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def train_config(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(self.batch_size, self.max_epochs, self.patience, seed, self.validation_fraction)


# ----------------------------------------------------------------------------- helpers

@contextmanager
def output_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockedError(f"{out_dir} is locked by another command (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_stamped(path: Path, stage: str, config: RunConfig) -> dict:
    if not path.exists():
        raise MissingStageError(f"missing {path.name}: run the '{stage}' stage first", stage)
    payload = json.loads(path.read_text())
    if payload.get("config_hash") != config.config_hash():
        raise StaleArtifactError(f"{path} was produced under config hash {payload.get('config_hash')}, "
                                 f"current is {config.config_hash()}; rerun '{stage}'", stage)
    return payload


def _is_current(path: Path, config: RunConfig) -> bool:
    if not path.exists():
        return False
    try:
        return json.loads(path.read_text()).get("config_hash") == config.config_hash()
    except json.JSONDecodeError:
        return False


def _stamp(config: RunConfig) -> dict:
    return {"config_hash": config.config_hash(), "master_seed": config.master_seed}


def _derived_seed(master: int, *words: int) -> int:
    ss = np.random.SeedSequence([master & ((1 << 64) - 1), *words])
    return int(ss.generate_state(1, np.uint64)[0])


def _write_forecast_csv(path: Path, dates: list[str], pred: np.ndarray, actual: np.ndarray, stamp: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    H = pred.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target_date", *(f"pred_t+{h + 1}" for h in range(H)), *(f"actual_t+{h + 1}" for h in range(H)),
                    "master_seed", "config_hash"])
        for d, p, a in zip(dates, pred, actual):
            w.writerow([d, *(repr(float(v)) for v in p), *(repr(float(v)) for v in a), stamp["master_seed"],
                        stamp["config_hash"]])


def read_forecast_csv(path: Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        H = sum(c.startswith("pred_") for c in header)
        rows = list(reader)
    dates = [r[0] for r in rows]
    pred = np.array([[float(v) for v in r[1:1 + H]] for r in rows]).reshape(-1, H)
    actual = np.array([[float(v) for v in r[1 + H:1 + 2 * H]] for r in rows]).reshape(-1, H)
    return dates, pred, actual


def load_prepared(config: RunConfig) -> PreparedData:
    out = config.out_dir
    manifest = _read_stamped(out / "manifest.json", "ingest", config)
    frame = AlignedFrame.from_csv(out / "frame.csv")
    norm = Normalizer.from_dict(manifest["normalizer"])
    plan = SplitPlan(**{k: manifest["split"][k] for k in ("rows", "val_start", "test_start", "horizon")})
    return PreparedData(frame, norm.apply(frame), norm, plan)


# ----------------------------------------------------------------------------- stages

def cmd_ingest(config: RunConfig, force: bool = False) -> dict:
    out = config.out_dir
    manifest_path = out / "manifest.json"
    if not force and _is_current(manifest_path, config) and (out / "frame.csv").exists():
        log.info("ingest: up to date")
        return json.loads(manifest_path.read_text())
    sources = {}
    series = {}
    for key in ("brent", "usdx", "sent"):
        path = Path(getattr(config, key))
        if not path.exists():
            raise PipelineError(f"input file for {key.upper()} not found: {path}", "ingest")
        s = load_csv(path, name=key.upper())
        series[key] = s
        sources[key.upper()] = {"path": str(path), "sha256": file_sha256(path), "rows": len(s),
                                "first_date": s.dates[0].isoformat(), "last_date": s.dates[-1].isoformat()}
    frame = align(series["brent"], series["usdx"], series["sent"])
    plan = SplitPlan.from_fractions(len(frame), config.test_fraction, config.validation_fraction)
    norm = Normalizer.fit(frame, plan.test_start)
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out / "frame.csv")
    manifest = {
        **_stamp(config),
        "sources": sources,
        "aligned_rows": len(frame),
        "first_date": frame.dates[0].isoformat(),
        "last_date": frame.dates[-1].isoformat(),
        "split": {**plan.to_dict(), "val_first_target_date": frame.dates[plan.val_start].isoformat(),
                  "test_first_target_date": frame.dates[plan.test_start].isoformat()},
        "normalizer": norm.to_dict(),
        "normalizer_fit_rows": plan.test_start,
    }
    _write_json(manifest_path, manifest)
    log.info("ingest: %d aligned rows (%s .. %s)", len(frame), manifest["first_date"], manifest["last_date"])
    return manifest


def cmd_calibrate(config: RunConfig, archs=None, force: bool = False) -> dict[str, CalibrationResult]:
    data = load_prepared(config)
    archs = [ArchitectureId.parse(a) for a in (archs or config.models)]
    space = calibration_space(config.max_hidden_exponent, config.max_window)
    out_dir = config.out_dir / "calibration"
    out_dir.mkdir(parents=True, exist_ok=True)
    results = {}
    for arch in archs:
        path = out_dir / f"{arch.value}.json"
        if not force and _is_current(path, config):
            log.info("calibrate %s: up to date", arch.value)
            results[arch.value] = CalibrationResult.load(path)
            continue
        gwo = GwoConfig(config.gwo_pop, config.gwo_iterations, config.master_seed)
        res = calibrate(arch, data, gwo, config.gwo_runs, config.train_config(), space, log=log.info)
        trace_files = []
        for k, (trace, seeds) in enumerate(zip(res.traces, res.run_seeds)):
            stem = out_dir / f"{arch.value}_run{k + 1}"
            trace.to_csv(stem.with_suffix(".csv"))
            trace.write_metadata(stem.with_suffix(".json"),
                                 GwoConfig(config.gwo_pop, config.gwo_iterations, seeds["gwo_seed"]))
            trace_files.append(stem.with_suffix(".csv").name)
        res.save(path, {**_stamp(config), "trace_files": trace_files})
        results[arch.value] = res
        log.info("calibrate %s: %s val MSE %.6g", arch.value, res.label, res.best_validation_mse)
    return results


def _dates(data: PreparedData, target_start: np.ndarray) -> list[str]:
    return [data.raw.dates[int(i)].isoformat() for i in target_start]


def cmd_train(config: RunConfig, archs=None, force: bool = False) -> dict[str, dict]:
    data = load_prepared(config)
    archs = [ArchitectureId.parse(a) for a in (archs or config.models)]
    out = config.out_dir
    stamp = _stamp(config)
    summaries = {}
    for arch in archs:
        summary_path = out / "models" / f"{arch.value}_train.json"
        if not force and _is_current(summary_path, config):
            log.info("train %s: up to date", arch.value)
            summaries[arch.value] = json.loads(summary_path.read_text())
            continue
        cal_path = out / "calibration" / f"{arch.value}.json"
        _read_stamped(cal_path, "calibrate", config)
        cal = CalibrationResult.load(cal_path)
        hp = cal.best_hp
        fit_set, val_set, test_set = data.windows(hp.features, hp.window)
        model = build(arch, hp, fit_set.feature_count)
        started = time.perf_counter()
        report = fit(model, fit_set, hp, config.train_config(cal.train_seed), validation=val_set)
        elapsed = time.perf_counter() - started
        (out / "models").mkdir(parents=True, exist_ok=True)
        model.save(out / "models" / arch.value)
        label = model_label(arch, hp.features)
        for name, part in (("val", val_set), ("test", test_set)):
            fm = predict(model, part.X, label)
            _write_forecast_csv(out / "forecasts" / f"{arch.value}_{name}.csv", _dates(data, part.target_start),
                                fm.values, part.Y, stamp)
        summary = {**stamp, "arch": arch.value, "label": label, "hp": hp.to_dict(), "train_seed": cal.train_seed,
                   "epochs_run": report.epochs_run, "best_validation_mse": report.best_validation_mse,
                   "calibration_validation_mse": cal.best_validation_mse, "train_seconds": elapsed,
                   "train_loss_curve": report.train_loss_curve, "validation_curve": report.validation_curve}
        _write_json(summary_path, summary)
        summaries[arch.value] = summary
        log.info("train %s: %s val MSE %.6g (%d epochs)", arch.value, label, report.best_validation_mse,
                 report.epochs_run)
    return summaries


def _trained(config: RunConfig, stage: str) -> dict[str, dict]:
    found = {}
    for arch in config.models:
        path = config.out_dir / "models" / f"{arch}_train.json"
        if path.exists():
            found[arch] = _read_stamped(path, "train", config)
    if not found:
        raise MissingStageError(f"no trained models in {config.out_dir / 'models'}: run the 'train' stage first",
                                "train")
    return found


def _resolve_members(config: RunConfig, trained: dict[str, dict]) -> list[str]:
    if not config.ensemble_members:
        return list(trained)
    by_label = {s["label"]: a for a, s in trained.items()}
    members = []
    for m in config.ensemble_members:
        if m in by_label:
            members.append(by_label[m])
            continue
        try:
            arch = ArchitectureId.parse(m).value
        except ValueError:
            raise PipelineError(f"ensemble member {m!r} is neither a trained label nor an architecture", "blend")
        if arch not in trained:
            raise MissingStageError(f"ensemble member {m!r} has not been trained", "train")
        members.append(arch)
    return members


def cmd_blend(config: RunConfig, force: bool = False) -> dict:
    out = config.out_dir
    weights_path = out / "ensemble" / "weights.json"
    if not force and _is_current(weights_path, config):
        log.info("blend: up to date")
        return json.loads(weights_path.read_text())
    trained = _trained(config, "blend")
    members = _resolve_members(config, trained)
    if len(members) < 2:
        raise PipelineError("blending needs at least two trained members", "blend")
    val = {a: read_forecast_csv(out / "forecasts" / f"{a}_val.csv") for a in members}
    test = {a: read_forecast_csv(out / "forecasts" / f"{a}_test.csv") for a in members}
    dates_val, _, y_val = val[members[0]]
    dates_test, _, y_test = test[members[0]]
    for a in members:
        if val[a][0] != dates_val or test[a][0] != dates_test:
            raise PipelineError(f"member {a} forecasts different target dates; rerun 'train'", "blend")
    gwo = GwoConfig(config.blend_pop, config.blend_iterations, _derived_seed(config.master_seed, 99))
    w, val_mse = optimize_weights([val[a][1] for a in members], y_val, gwo)
    blended_val = blend([val[a][1] for a in members], w)
    blended_test = blend([test[a][1] for a in members], w)
    stamp = _stamp(config)
    _write_forecast_csv(out / "forecasts" / "ensemble_val.csv", dates_val, blended_val.values, y_val, stamp)
    _write_forecast_csv(out / "forecasts" / "ensemble_test.csv", dates_test, blended_test.values, y_test, stamp)
    fitting_hash = hashlib.sha256(b"".join((out / "forecasts" / f"{a}_val.csv").read_bytes()
                                           for a in members)).hexdigest()
    payload = {
        **stamp,
        "members": [{"arch": a, "label": trained[a]["label"], "weight": float(wk)} for a, wk in zip(members, w)],
        "validation_mse": val_mse,
        "member_validation_mse": {trained[a]["label"]: float(np.mean((val[a][1] - y_val) ** 2)) for a in members},
        "fitting_slice_sha256": fitting_hash,
        "blend_pop": config.blend_pop,
        "blend_iterations": config.blend_iterations,
    }
    _write_json(weights_path, payload)
    log.info("blend: weights %s, val MSE %.6g", ", ".join(f"{m['label']}={m['weight']:.4f}" for m in payload["members"]),
             val_mse)
    return payload


def cmd_evaluate(config: RunConfig) -> dict[str, MetricReport]:
    data = load_prepared(config)
    out = config.out_dir
    trained = _trained(config, "evaluate")
    norm = data.normalizer
    rows, price_rows = {}, {}
    sources = [(s["label"], out / "forecasts" / f"{a}_test.csv") for a, s in trained.items()]
    if (out / "ensemble" / "weights.json").exists():
        _read_stamped(out / "ensemble" / "weights.json", "blend", config)
        sources.insert(0, ("GWO-Ensemble", out / "forecasts" / "ensemble_test.csv"))
    for label, path in sources:
        _, pred, actual = read_forecast_csv(path)
        rows[label] = MetricReport.compute(actual, pred)
        price_rows[label] = MetricReport.compute(norm.invert_column("BRENT", actual), norm.invert_column("BRENT", pred))
    stamp = _stamp(config)
    write_metrics_csv(out / "metrics.csv", rows, stamp)
    write_metrics_csv(out / "metrics_price.csv", price_rows, stamp)
    summary = {**stamp, "scale": "normalized", "metrics": {k: v.as_dict() for k, v in rows.items()},
               "reference": {"ensemble_mse": REFERENCE_ENSEMBLE_MSE, "best_solutions": REFERENCE_BEST_SOLUTIONS}}
    _write_json(out / "metrics.json", summary)
    for label, rep in rows.items():
        log.info("evaluate %-32s MSE %.6g  R2 %.4f", label, rep.mse, rep.r2)
    return rows


def cmd_report(config: RunConfig) -> list[Path]:
    data = load_prepared(config)
    out = config.out_dir
    rep_dir = out / "report"
    rep_dir.mkdir(parents=True, exist_ok=True)
    trained = _trained(config, "report")
    stamp = _stamp(config)
    written = []
    norm = data.normalizer

    runtime_rows = []
    best_solutions = []
    for arch in trained:
        cal_path = out / "calibration" / f"{arch}.json"
        cal = CalibrationResult.load(cal_path)
        conv = rep_dir / f"convergence_{arch}.csv"
        with open(conv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", "iteration", "best_fitness", "master_seed", "config_hash"])
            for k, tr in enumerate(cal.traces, start=1):
                for i, f in enumerate(tr.best_fitness_per_iteration, start=1):
                    w.writerow([k, i, repr(float(f)), stamp["master_seed"], stamp["config_hash"]])
        written.append(conv)
        for k, tr in enumerate(cal.traces, start=1):
            runtime_rows.append([cal.label, k, f"{tr.wall_time_seconds:.3f}", tr.evaluations, tr.failures,
                                 repr(float(cal.run_best[k - 1]))])
        hp = cal.best_hp
        best_solutions.append([cal.label, repr(cal.best_validation_mse), hp.window, f"{hp.learning_rate:.6g}",
                       f"{hp.dropout:.4f}", hp.hidden, hp.optimizer])

    sources = [(trained[a]["label"], out / "forecasts" / f"{a}_test.csv") for a in trained]
    if (out / "forecasts" / "ensemble_test.csv").exists():
        sources.insert(0, ("GWO-Ensemble", out / "forecasts" / "ensemble_test.csv"))
    for label, path in sources:
        dates, pred, actual = read_forecast_csv(path)
        target = rep_dir / f"actual_vs_predicted_{label}.csv"
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["target_date", "actual", "predicted", "actual_price", "predicted_price", "master_seed",
                        "config_hash"])
            for d, p, a in zip(dates, pred[:, 0], actual[:, 0]):
                w.writerow([d, repr(float(a)), repr(float(p)), repr(float(norm.invert_column("BRENT", a))),
                            repr(float(norm.invert_column("BRENT", p))), stamp["master_seed"], stamp["config_hash"]])
        written.append(target)

    for name, header, rows in (
        ("runtime.csv", ["model", "run", "wall_time_seconds", "evaluations", "failures", "best_fitness"], runtime_rows),
        ("best_solutions.csv", ["model", "mse", "window", "learning_rate", "dropout", "hidden", "optimizer"],
         best_solutions),
    ):
        path = rep_dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*header, "master_seed", "config_hash"])
            for r in rows:
                w.writerow([*r, stamp["master_seed"], stamp["config_hash"]])
        written.append(path)

    weights_path = out / "ensemble" / "weights.json"
    if weights_path.exists():
        weights = json.loads(weights_path.read_text())
        path = rep_dir / "ensemble_weights.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "weight", "master_seed", "config_hash"])
            for m in weights["members"]:
                w.writerow([m["label"], f"{m['weight']:.4f}", stamp["master_seed"], stamp["config_hash"]])
        written.append(path)
    log.info("report: wrote %d files to %s", len(written), rep_dir)
    return written


def run_all(config: RunConfig, force: bool = False) -> dict[str, MetricReport]:
    cmd_ingest(config, force)
    cmd_calibrate(config, force=force)
    cmd_train(config, force=force)
    if len(config.ensemble_members or config.models) >= 2:
        cmd_blend(config, force)
    metrics = cmd_evaluate(config)
    cmd_report(config)
    return metrics
