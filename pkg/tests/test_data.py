from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwoforecast.data import (AlignedFrame, DataError, FeatureSet, Normalizer, RawSeries, SplitPlan, align,
                              chronological_split, fit_normalizer, load_csv, make_windows, prepare)
from gwoforecast.synth import business_days, synthetic_frame, write_synthetic


def write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def series(name, start, values, skip=()):
    days = [start + timedelta(days=i) for i in range(len(values) + len(skip)) if i not in skip]
    return RawSeries(name, tuple(days), np.asarray(values, dtype=float))


def frame_of(brent, usdx=None, sent=None):
    n = len(brent)
    return AlignedFrame(tuple(business_days(date(2020, 1, 1), n)), {
        "BRENT": np.asarray(brent, dtype=float),
        "USDX": np.asarray(usdx if usdx is not None else np.arange(n) * 2.0, dtype=float),
        "SENT": np.asarray(sent if sent is not None else np.arange(n) * -1.0, dtype=float),
    })


def test_load_three_rows(tmp_path):
    p = write(tmp_path / "b.csv", ["date,value", "2020-01-03,3", "2020-01-01,1", "2020-01-02,2"])
    s = load_csv(p)
    assert len(s) == 3
    assert s.dates[0] == date(2020, 1, 1)
    np.testing.assert_array_equal(s.values, [1, 2, 3])


def test_load_duplicate_date(tmp_path):
    p = write(tmp_path / "b.csv", ["date,value", "2020-01-01,1", "2020-01-01,2"])
    with pytest.raises(DataError, match="2020-01-01"):
        load_csv(p)


def test_load_bad_row_reports_line(tmp_path):
    p = write(tmp_path / "b.csv", ["date,value", "2020-01-01,1", "2020-13-01,2"])
    with pytest.raises(DataError, match=":3:"):
        load_csv(p)


def test_load_empty(tmp_path):
    with pytest.raises(DataError):
        load_csv(write(tmp_path / "e.csv", ["date,value"]))
    (tmp_path / "z.csv").write_text("")
    with pytest.raises(DataError):
        load_csv(tmp_path / "z.csv")


def test_load_covers_study_period(tmp_path):
    days = business_days(date(2012, 1, 3), 2500)
    days = [d for d in days if d <= date(2021, 4, 1)]
    write(tmp_path / "brent.csv", ["date,value"] + [f"{d.isoformat()},{60 + i % 7}" for i, d in enumerate(days)])
    s = load_csv(tmp_path / "brent.csv")
    assert s.dates[0] == date(2012, 1, 3) and s.dates[-1] == date(2021, 4, 1)


def test_align_identical_dates():
    start = date(2020, 1, 1)
    f = align(series("B", start, [1, 2, 3]), series("U", start, [4, 5, 6]), series("S", start, [7, 8, 9]))
    assert len(f) == 3


def test_align_forward_fills_gap():
    start = date(2020, 1, 1)
    f = align(series("B", start, [1, 2, 3, 4]), series("U", start, [10, 11, 13], skip=(2,)),
              series("S", start, [0, 0, 0, 0]))
    np.testing.assert_array_equal(f.columns["USDX"], [10, 11, 11, 13])


def test_align_drops_leading_gap():
    start = date(2020, 1, 1)
    brent = series("B", start, np.arange(6.0))
    sent = series("S", start + timedelta(days=3), [1, 2, 3])
    f = align(brent, series("U", start, np.arange(6.0)), sent)
    assert len(f) == 3 and f.dates[0] == start + timedelta(days=3)
    assert set(f.dates) <= set(brent.dates)


def test_align_empty_intersection():
    start = date(2020, 1, 1)
    with pytest.raises(DataError):
        align(series("B", start, [1, 2]), series("U", start + timedelta(days=9), [1]), series("S", start, [1, 2]))


def test_normalizer_examples():
    f = frame_of([10, 20, 30, 35])
    norm = fit_normalizer(f, 3)
    np.testing.assert_allclose(norm.apply(f).columns["BRENT"], [0, 0.5, 1.0, 1.25])


def test_normalizer_constant_column():
    with pytest.raises(DataError):
        Normalizer.fit(frame_of([5, 5, 5, 6]), 3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=4, max_size=30).filter(lambda v: max(v[:3]) > min(v[:3])))
def test_normalizer_round_trip(values):
    f = frame_of(values)
    norm = Normalizer.fit(f, 3)
    back = norm.invert(norm.apply(f))
    for name in f.columns:
        np.testing.assert_allclose(back.columns[name], f.columns[name], rtol=0, atol=1e-9 * (1 + np.abs(values).max()))


def test_windows_examples():
    f = frame_of(np.arange(10.0))
    ds = make_windows(f, FeatureSet.NONE, 3)
    assert len(ds) == 5 and ds.X.shape == (5, 3, 1) and ds.Y.shape == (5, 3)
    np.testing.assert_array_equal(ds.Y[0], [3, 4, 5])
    assert len(make_windows(frame_of(np.arange(6.0)), FeatureSet.NONE, 3)) == 1
    assert make_windows(f, FeatureSet.BOTH, 3).feature_count == 3


def test_windows_feature_columns_order():
    f = frame_of(np.arange(8.0))
    ds = make_windows(f, FeatureSet.BOTH, 4)
    np.testing.assert_array_equal(ds.X[1, :, 1], f.columns["USDX"][1:5])
    np.testing.assert_array_equal(ds.X[1, :, 2], f.columns["SENT"][1:5])


def test_windows_too_short():
    with pytest.raises(DataError, match="at least 8"):
        make_windows(frame_of(np.arange(7.0)), FeatureSet.NONE, 5)


def test_chronological_split_counts():
    ds = make_windows(frame_of(np.arange(105.0)), FeatureSet.NONE, 3)
    assert len(ds) == 100
    train, test = chronological_split(ds, 0.2)
    assert len(test) == 20
    assert len(train) == 80 - 2


def test_chronological_split_bound():
    ds = make_windows(frame_of(np.arange(15.0)), FeatureSet.NONE, 3)
    with pytest.raises(ValueError):
        chronological_split(ds, 0.5)


@pytest.mark.parametrize("L,f", [(30, 0.2), (41, 0.3), (57, 0.1)])
def test_chronological_split_overlap_brute_force(L, f):
    ds = make_windows(frame_of(np.arange(float(L))), FeatureSet.NONE, 5)
    train, test = chronological_split(ds, f)
    test_target_rows = {int(s) + k for s in test.target_start for k in range(3)}
    for s in train.target_start:
        touched = set(range(int(s) - 5, int(s) + 3))
        assert not touched & test_target_rows
    # Nothing more than necessary was dropped.
    n_train = int(np.ceil(len(ds) * (1 - f)))
    kept_last = int(train.target_start[-1])
    assert len(train) == n_train - 2 and kept_last + 2 < int(test.target_start[0])


def test_split_plan_aligns_targets_across_windows():
    data = prepare(synthetic_frame(300))
    firsts = set()
    for w in (3, 10, 30):
        fit, val, test = data.windows(FeatureSet.SENT, w)
        assert fit.target_start[-1] + 2 < data.plan.val_start <= val.target_start[0]
        assert val.target_start[-1] + 2 < data.plan.test_start == test.target_start[0]
        firsts.add((tuple(val.target_start), tuple(test.target_start)))
    assert len(firsts) == 1


def test_prepare_normalizes_on_pre_test_rows_only():
    frame = synthetic_frame(300)
    data = prepare(frame)
    brent = data.normalized.columns["BRENT"][:data.plan.test_start]
    assert brent.min() == 0.0 and brent.max() == 1.0


def test_synthetic_writer_round_trip(tmp_path):
    paths = write_synthetic(tmp_path, rows=50, seed=3)
    frame = synthetic_frame(50, 3)
    b = load_csv(paths["brent"])
    np.testing.assert_array_equal(b.values, frame.columns["BRENT"])
    f = align(b, load_csv(paths["usdx"]), load_csv(paths["sent"]))
    assert len(f) == 50
