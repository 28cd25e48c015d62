import math

import numpy as np
import pytest

import gwoforecast.calibration as calmod
from gwoforecast.calibration import (CalibrationFailed, CalibrationResult, calibrate, calibration_objective,
                                     calibration_space, decoded_to_hp, hp_to_position, run_seeds)
from gwoforecast.data import FeatureSet, prepare
from gwoforecast.forecasters import ArchitectureId, HyperParams
from gwoforecast.gwo import Categorical, Continuous, GwoConfig, Integer, decode, gwo_optimize
from gwoforecast.nn import TrainConfig
from gwoforecast.synth import noisy_sine_frame, synthetic_frame

FAST = TrainConfig(batch_size=32, max_epochs=3, patience=1, seed=0)


@pytest.fixture(scope="module")
def data():
    return prepare(synthetic_frame(260, seed=2))


def test_space_layout():
    space = calibration_space()
    assert space.names() == ["learning_rate", "hidden_exponent", "optimizer", "dropout", "window", "features"]
    lr, n, opt, drop, win, feat = space.dims
    assert lr == Continuous(1e-4, 0.1, log_scaled=True, name="learning_rate")
    assert (n.lo, n.hi, win.lo, win.hi) == (1, 8, 3, 30)
    assert isinstance(opt, Categorical) and opt.option_count == 7
    assert (drop.lo, drop.hi) == (0.2, 0.5)
    assert isinstance(feat, Categorical) and feat.option_count == 4


def test_space_corners_decode_into_table_ranges():
    space = calibration_space()
    for corner in (space.lower, space.upper):
        hp = decoded_to_hp(decode(corner, space))
        assert 1e-4 <= hp.learning_rate <= 0.1 * (1 + 1e-12)
    top = decoded_to_hp(decode(space.upper, space))
    assert (top.hidden_exponent, top.optimizer, top.window, top.features) == (8, "Adamax", 30, FeatureSet.BOTH)


def test_hp_position_round_trip():
    space = calibration_space()
    hp = HyperParams(0.0031, 1, "AdamW", 0.3992, 5, FeatureSet.SENT)
    back = decoded_to_hp(decode(hp_to_position(hp, space), space))
    assert back.hidden_exponent == 1 and back.optimizer == "AdamW" and back.window == 5
    assert back.features is FeatureSet.SENT
    assert back.learning_rate == pytest.approx(0.0031, rel=1e-12)


def test_objective_deterministic(data):
    decoded = [0.01, 2, 5, 0.25, 6, 2]
    a = calibration_objective(ArchitectureId.BI_GRU, decoded, data, FAST, 4)
    b = calibration_objective(ArchitectureId.BI_GRU, decoded, data, FAST, 4)
    assert a == b and math.isfinite(a)


def test_objective_feature_wiring(data, monkeypatch):
    seen = []
    real = calmod.build

    def spy(arch, hp, feature_count):
        seen.append(feature_count)
        return real(arch, hp, feature_count)

    monkeypatch.setattr(calmod, "build", spy)
    for feats in (0, 3):
        calibration_objective(ArchitectureId.BI_LSTM, [0.01, 1, 5, 0.2, 4, feats], data, FAST, 0)
    assert seen == [1, 3]


def test_objective_ignores_test_rows(data):
    decoded = [0.01, 2, 5, 0.25, 6, 3]
    base = calibration_objective(ArchitectureId.BI_LSTM, decoded, data, FAST, 1)
    cols = {k: v.copy() for k, v in data.normalized.columns.items()}
    for v in cols.values():
        v[data.plan.test_start:] = 1e6
    poisoned = prepare(data.raw)
    poisoned.normalized = data.normalized.replace(cols)
    assert calibration_objective(ArchitectureId.BI_LSTM, decoded, poisoned, FAST, 1) == base


def test_objective_sane_beats_reckless():
    data = prepare(noisy_sine_frame(300, period=20, noise=0.05, seed=0)[0])
    cfg = TrainConfig(16, 40, 5, 0)
    sane = HyperParams(0.005, 3, "Adam", 0.2, 10, FeatureSet.NONE)
    reckless = HyperParams(0.1, 1, "Adam", 0.5, 10, FeatureSet.NONE)
    assert (calibration_objective(ArchitectureId.BI_GRU, sane, data, cfg, 0)
            < calibration_objective(ArchitectureId.BI_GRU, reckless, data, cfg, 0))


def test_divergence_scores_infinity(data, monkeypatch):
    from gwoforecast.nn import TrainingDiverged

    def boom(*a, **k):
        raise TrainingDiverged(1)

    monkeypatch.setattr(calmod, "fit", boom)
    assert calibration_objective(ArchitectureId.BI_GRU, [0.01, 1, 0, 0.2, 4, 0], data, FAST, 0) == math.inf


def test_run_seeds_are_distinct_and_stable():
    a = run_seeds(7, ArchitectureId.BI_GRU, 3)
    assert a == run_seeds(7, ArchitectureId.BI_GRU, 3)
    assert a != run_seeds(7, ArchitectureId.BI_LSTM, 3)
    assert len({s["gwo_seed"] for s in a}) == 3


def test_single_run_equals_one_gwo_call(data):
    space = calibration_space(max_hidden_exponent=2, max_window=8)
    res = calibrate(ArchitectureId.BI_GRU, data, GwoConfig(4, 1, seed=3), 1, FAST, space)
    s = run_seeds(3, ArchitectureId.BI_GRU, 1)[0]
    decoded, fitness, _ = gwo_optimize(
        lambda d: calibration_objective(ArchitectureId.BI_GRU, d, data, FAST, s["train_seed"]),
        space, GwoConfig(4, 1, seed=s["gwo_seed"]))
    assert res.best_validation_mse == fitness
    assert res.best_hp == decoded_to_hp(decoded)


def test_calibrate_invariants_and_persistence(data, tmp_path, monkeypatch):
    evaluated = []
    real = calmod.calibration_objective

    def spy(arch, decoded, *rest):
        hp = decoded_to_hp(decoded)
        evaluated.append(hp)
        return real(arch, decoded, *rest)

    monkeypatch.setattr(calmod, "calibration_objective", spy)
    space = calibration_space(max_hidden_exponent=2, max_window=8)
    res = calibrate("cnn_bi_lstm", data, GwoConfig(4, 1, seed=0), 2, FAST, space)
    assert len(evaluated) == 2 * 4 * 2
    for hp in evaluated:
        assert 1 <= hp.hidden_exponent <= 2 and 3 <= hp.window <= 8
    assert res.best_validation_mse == min(res.run_best)
    for t in res.traces:
        assert res.best_validation_mse <= t.best_fitness_per_iteration[-1]
    res.save(tmp_path / "c.json")
    back = CalibrationResult.load(tmp_path / "c.json")
    assert back.best_hp == res.best_hp and back.train_seed == res.train_seed
    assert back.to_dict() == res.to_dict()


def test_all_runs_failing(data, monkeypatch):
    monkeypatch.setattr(calmod, "calibration_objective", lambda *a: math.inf)
    with pytest.raises(CalibrationFailed):
        calibrate(ArchitectureId.BI_GRU, data, GwoConfig(4, 1), 2, FAST)


def test_runs_must_be_positive(data):
    with pytest.raises(ValueError):
        calibrate(ArchitectureId.BI_GRU, data, GwoConfig(4, 1), 0, FAST)
