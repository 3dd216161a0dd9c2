import hashlib
import json
from pathlib import Path

import pytest

from ieegpain import cli
from ieegpain.cli import RunConfig, format_summary, load_config, main, percent, summarize
from ieegpain.errors import ConfigError, SchemaError

SYNTH = {
    "channels": 4,
    "trials_per_class": {"no_pain": 4, "pain": 4},
    "seed": 3,
    "effects": [
        {"kind": "band_power", "channels": [0], "band": "alpha", "effect_size": 4.0},
        {"kind": "coherence", "channels": [1, 2], "band": "gamma", "effect_size": 0.8},
    ],
}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    (d / "synth.json").write_text(json.dumps(SYNTH))
    assert main(["synth", "--config", str(d / "synth.json"), "--out", str(d)]) == 0
    return d


def _run_config(tmp, synth_dir, **extra):
    doc = {"recording": str(synth_dir / "recording.pnb"), "reports": str(synth_dir / "reports.csv"),
           "iterations": 2, "folds": 2, "n_trees": 10, "k": 3, "feature_set": "MSC", "test_fraction": 0.25,
           "name": "synthetic"}
    doc.update(extra)
    path = Path(tmp) / "run.json"
    path.write_text(json.dumps(doc))
    return path


# --- configuration ----------------------------------------------------------

def test_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 5, "k": 7, "folds": 3, "zero_phase": True}))
    env = {"IEEGPAIN_K": "9", "IEEGPAIN_FOLDS": "4", "IEEGPAIN_PURE_PYTHON": "1", "IEEGPAIN_TASK": "ternary",
           "OTHER": "x"}
    cfg = load_config(path, {"folds": 6, "seed": None}, environ=env)
    assert (cfg.seed, cfg.k, cfg.folds, cfg.task, cfg.zero_phase) == (5, 9, 6, "ternary", True)
    assert load_config(None, environ={}).to_dict() == RunConfig().to_dict()


def test_env_coercion_and_errors(tmp_path):
    assert load_config(environ={"IEEGPAIN_STANDARDIZE": "off"}).standardize is False
    assert load_config(environ={"IEEGPAIN_NOTCH_FREQS": "[50, 100]"}).notch_freqs == [50, 100]
    assert load_config(environ={"IEEGPAIN_NAME": "123"}).name == "123"
    with pytest.raises(ConfigError):
        load_config(environ={"IEEGPAIN_SEED": "abc"})
    with pytest.raises(ConfigError):
        load_config(environ={"IEEGPAIN_ZERO_PHASE": "maybe"})
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sed": 1}))
    with pytest.raises(ConfigError, match="sed"):
        load_config(bad, environ={})
    bad.write_text("[1]")
    with pytest.raises(ConfigError):
        load_config(bad, environ={})
    with pytest.raises(ConfigError):
        RunConfig(model="knn")
    with pytest.raises(ConfigError):
        RunConfig(strategy="S2", task="ternary")


def test_config_hash():
    a, b = RunConfig(seed=1), RunConfig(seed=1)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != RunConfig(seed=2).config_hash()
    assert RunConfig(model="rf", strategy="s1").protocol().model_params == {"n_trees": 100}


# --- summary tables ---------------------------------------------------------

def _report(path, mean, model="RF", strategy="S1", dataset="subject2", version=1):
    doc = {"schema": "ieegpain.eval_report", "version": version, "grand_mean": mean,
           "config": {"strategy": strategy, "model_kind": model, "dataset": dataset}}
    Path(path).write_text(json.dumps(doc))
    return str(path)


def test_summary_row_format(tmp_path):
    paths = [_report(tmp_path / f"{m}.json", v, m) for m, v in (("LR", 0.52), ("SVM", 0.47), ("RF", 0.54))]
    cols, table = summarize(paths)
    assert cols == ["S1 LR", "S1 SVM", "S1 RF"]
    assert format_summary(cols, table, "text") == "52 47 54\n"
    assert format_summary(cols, table, "csv").splitlines() == ["dataset,S1 LR,S1 SVM,S1 RF", "subject2,52,47,54"]
    assert "| subject2 | 52 | 47 | 54 |" in format_summary(cols, table, "markdown")
    one = summarize([paths[0]])
    assert format_summary(*one, "text") == "52\n"


def test_percent_rounds_half_up():
    assert percent(0.675) == 68
    assert percent(0.285) == 29
    assert percent(0.5) == 50 and percent(1.0) == 100 and percent(0.004) == 0


def test_summary_schema_mismatch(tmp_path):
    ok = _report(tmp_path / "a.json", 0.5)
    bad = _report(tmp_path / "b.json", 0.5, version=2)
    with pytest.raises(SchemaError):
        summarize([ok, bad])


# --- verbs ------------------------------------------------------------------

def test_synth_outputs(synth_dir):
    assert {"recording.pnb", "reports.csv", "synth.json"} <= {p.name for p in synth_dir.iterdir()}
    assert (synth_dir / "reports.csv").read_text().splitlines()[0] == "timestamp_s,vas"
    assert len((synth_dir / "reports.csv").read_text().splitlines()) == 9


def test_run_artifacts_and_determinism(synth_dir, tmp_path):
    cfg = _run_config(tmp_path, synth_dir)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(b)]) == 0
    names = {p.name for p in a.iterdir()}
    assert {"manifest.json", "report.json", "report_folds.csv", "selection.json", "features_pib.csv",
            "features_pib.json", "features_msc.csv", "features_msc.json", "label_histogram.csv",
            "network.csv", "network.json", "network.png"} <= names
    assert not (a / ".staging").exists() and not (a / "failed").exists()
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    for name, digest in man["files"].items():
        assert hashlib.sha256((a / name).read_bytes()).hexdigest() == digest
    man_b = json.loads((b / "manifest.json").read_text())
    assert man["config_hash"] != man_b["config_hash"]  # out_dir differs
    assert {k: v for k, v in man["files"].items() if k != "network.png"} == \
        {k: v for k, v in man_b["files"].items() if k != "network.png"}
    assert man["stages"][-1] == "network" and man["backend"] in ("cython", "python")
    hist = (a / "label_histogram.csv").read_text().splitlines()
    assert hist[0] == "vas,class,count" and len(hist) == 12


def test_failed_run_is_quarantined(synth_dir, tmp_path, capsys):
    cfg = _run_config(tmp_path, synth_dir, test_fraction=0.99)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 1
    err = json.loads((out / "failed" / "error.json").read_text())
    assert err["stage"] == "evaluate" and "select" in err["completed_stages"]
    assert (out / "failed" / "features_pib.csv").exists()
    assert not (out / "report.json").exists() and not (out / "manifest.json").exists()
    assert "evaluate" in capsys.readouterr().err


def test_missing_reports_names_path(synth_dir, tmp_path, capsys):
    cfg = _run_config(tmp_path, synth_dir, reports=str(tmp_path / "nope.csv"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "nope.csv" in capsys.readouterr().err


def test_stepwise_verbs(synth_dir, tmp_path, capsys):
    cfg = str(_run_config(tmp_path, synth_dir))
    assert main(["preprocess", "--config", cfg, "--out", str(tmp_path / "clean.pnb")]) == 0
    assert main(["features", "--config", cfg, "--features", "pib", "--out", str(tmp_path / "f")]) == 0
    header = (tmp_path / "f" / "features.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 24 and header[0] == "PIB:ch00:delta"
    assert main(["select", "--config", cfg, "--features", str(tmp_path / "f" / "features.csv"), "--k", "2",
                 "--out", str(tmp_path / "sel.json")]) == 0
    sel = json.loads((tmp_path / "sel.json").read_text())
    assert sel["k"] == 2 and len(sel["channels"]) == 2
    assert main(["features", "--config", cfg, "--features", "msc", "--selection", str(tmp_path / "sel.json"),
                 "--out", str(tmp_path / "m")]) == 0
    assert len((tmp_path / "m" / "features.csv").read_text().splitlines()[0].split(",")) == 6
    assert main(["evaluate", "--config", cfg, "--model", "lr", "--out", str(tmp_path / "lr.json")]) == 0
    assert main(["evaluate", "--config", cfg, "--out", str(tmp_path / "rf.json"), "-v"]) == 0
    assert (tmp_path / "rf_folds.csv").exists()
    assert main(["network", "--from", str(tmp_path / "rf.json"), "--top-k", "3", "--no-plot"]) == 0
    out = capsys.readouterr().out
    assert "rank,electrode,strength,degree" in out and (tmp_path / "network.csv").exists()
    assert main(["summarize", str(tmp_path / "lr.json"), str(tmp_path / "rf.json"), "--format", "csv"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "dataset,S1 LR,S1 RF"
    assert main(["network", "--from", str(tmp_path / "lr.json")]) == 1


def test_module_entry_point_help(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "summarize" in capsys.readouterr().out
    with pytest.raises(SystemExit) as exc:
        main(["evaluate"])
    assert exc.value.code == 2
    assert cli.ENV_PREFIX == "IEEGPAIN_"
