import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ieegpain.errors import DataFormatError, InputFileError
from ieegpain.io import (read_csv_recording, read_feature_matrix, read_pnb, read_recording, read_reports,
                         sidecar_path, write_feature_matrix, write_pnb, write_reports)
from ieegpain.signal_core import PainReport, Recording
from ieegpain.spectral import FeatureMatrix

f32 = st.floats(-1e6, 1e6, width=32)


@given(arrays(np.float32, st.tuples(st.integers(1, 4), st.integers(1, 50)), elements=f32),
       st.sampled_from([500.0, 1000.0, 250.5]))
def test_pnb_round_trip(tmp_path_factory, samples, fs):
    path = tmp_path_factory.mktemp("pnb") / "r.pnb"
    names = [f"é{i}" for i in range(samples.shape[0])]
    write_pnb(path, Recording(samples.astype(np.float64), fs, names))
    back = read_pnb(path)
    assert back.channel_names == names and back.sample_rate_hz == fs
    np.testing.assert_array_equal(back.samples, samples.astype(np.float64))
    assert read_recording(path).channel_names == names


def test_pnb_errors(tmp_path):
    bad = tmp_path / "bad.pnb"
    bad.write_bytes(b"XXXX" + b"\0" * 12)
    with pytest.raises(DataFormatError):
        read_pnb(bad)
    bad.write_bytes(b"PNB")
    with pytest.raises(DataFormatError):
        read_pnb(bad)
    good = tmp_path / "g.pnb"
    write_pnb(good, Recording(np.zeros((2, 10)), 500.0, ["a", "b"]))
    raw = good.read_bytes()
    (tmp_path / "t.pnb").write_bytes(raw[:-2])
    with pytest.raises(DataFormatError):
        read_pnb(tmp_path / "t.pnb")
    with pytest.raises(InputFileError, match="missing.pnb"):
        read_pnb(tmp_path / "missing.pnb")


def test_csv_recording(tmp_path):
    p = tmp_path / "r.csv"
    t = np.arange(6) / 500.0
    rows = ["time,LA1, LA2"] + [f"{float(ti)!r},{i},{-i}" for i, ti in enumerate(t)]
    p.write_text("\n".join(rows) + "\n")
    rec = read_recording(p)
    assert rec.channel_names == ["LA1", "LA2"] and rec.sample_rate_hz == pytest.approx(500.0)
    np.testing.assert_array_equal(rec.samples[1], -np.arange(6))
    assert read_csv_recording(p, sample_rate_hz=250.0).sample_rate_hz == 250.0
    p.write_text("time,a\n0,1\n0,2\n")
    with pytest.raises(DataFormatError):
        read_csv_recording(p)
    p.write_text("time,a\n0,1\n0.1,x\n")
    with pytest.raises(DataFormatError):
        read_csv_recording(p)
    p.write_text("")
    with pytest.raises(DataFormatError):
        read_csv_recording(p)


def test_reports_round_trip_and_errors(tmp_path):
    p = tmp_path / "rep.csv"
    reps = [PainReport(600.0, 4), PainReport(912.25, 10)]
    write_reports(p, reps)
    assert p.read_text().splitlines()[0] == "timestamp_s,vas"
    assert read_reports(p) == reps
    for body in ("time,vas\n1,2\n", "timestamp_s,vas\n1,11\n", "timestamp_s,vas\n1,2.5\n",
                 "timestamp_s,vas\nabc,2\n"):
        p.write_text(body)
        with pytest.raises(DataFormatError):
            read_reports(p)
    with pytest.raises(InputFileError, match="nope.csv"):
        read_reports(tmp_path / "nope.csv")


def test_feature_matrix_round_trip(tmp_path):
    r = np.random.default_rng(0)
    fm = FeatureMatrix(r.standard_normal((4, 3)), ["PIB:a:alpha", "PIB:b:alpha", "MSC:a|b:alpha"],
                       [0, 0, 1, 1], [0, 1, 0, 1], {"degenerate_cells": 2})
    path = tmp_path / "f.csv"
    write_feature_matrix(path, fm, labels=[0, 0, 1, 1], class_names=["no_pain", "pain"])
    assert sidecar_path(path) == str(tmp_path / "f.json")
    back, labels, names = read_feature_matrix(path)
    np.testing.assert_array_equal(back.values, fm.values)
    assert back.columns == fm.columns and back.flags == fm.flags
    assert labels.tolist() == [0, 0, 1, 1] and names == ["no_pain", "pain"]
    assert back.trial_ids.tolist() == [0, 0, 1, 1]
    write_feature_matrix(path, fm)
    assert read_feature_matrix(path)[1] is None


def test_feature_matrix_errors(tmp_path):
    fm = FeatureMatrix(np.ones((2, 1)), ["PIB:a:alpha"], [0, 0], [0, 1])
    path = tmp_path / "f.csv"
    write_feature_matrix(path, fm)
    side = tmp_path / "f.json"
    doc = json.loads(side.read_text())
    side.write_text(json.dumps(dict(doc, rows=doc["rows"][:1])))
    with pytest.raises(DataFormatError):
        read_feature_matrix(path)
    side.write_text(json.dumps(dict(doc, schema="x")))
    with pytest.raises(DataFormatError):
        read_feature_matrix(path)
    side.write_text("{not json")
    with pytest.raises(DataFormatError):
        read_feature_matrix(path)
    side.unlink()
    with pytest.raises(InputFileError):
        read_feature_matrix(path)
