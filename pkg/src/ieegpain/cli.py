"""Command-line pipeline: synth, preprocess, features, select, evaluate, network, summarize, run.

Settings resolve in this order, later winning: built-in defaults, the
``--config`` JSON file, ``IEEGPAIN_<FIELD>`` environment variables, then
explicit command-line flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import sys
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from . import __version__, _kernels
from .datagen import SynthConfig, generate
from .errors import ConfigError, IeegPainError, InvalidArgumentError, InputFileError, SchemaError, StageError
from .evaluation import REPORT_SCHEMA, REPORT_VERSION, EvalReport, ProtocolConfig, run_protocol
from .features import FeatureStore, build_dataset, normalize_feature_set
from .io import (read_feature_matrix, read_recording, read_reports, write_feature_matrix, write_pnb,
                 write_reports)
from .labeling import LabelStrategy, label_dataset, write_label_histogram
from .network import build_network, export_network, top_electrodes
from .selection import score_electrodes, select_top_k
from .signal_core import BANDS, BandSpec, preprocess, segment_trials, window_trial

log = logging.getLogger("ieegpain")
ENV_PREFIX = "IEEGPAIN_"
MANIFEST_SCHEMA = "ieegpain.manifest"
_RESERVED_ENV = {"IEEGPAIN_PURE_PYTHON"}


@dataclass
class RunConfig:
    recording: str = None
    reports: str = None
    name: str = None
    bad_channels: list = field(default_factory=list)
    sample_rate_hz: float = None
    notch_freqs: list = field(default_factory=lambda: [60.0, 120.0, 180.0])
    notch_q: float = 30.0
    lowpass_hz: float = 200.0
    lowpass_order: int = 5
    zero_phase: bool = False
    bands: list = field(default_factory=lambda: [[b.name, b.low_hz, b.high_hz] for b in BANDS])
    pib_discard_s: float = 0.5
    bandpass_order: int = 2
    welch_segment_s: float = 1.0
    welch_overlap: float = 0.5
    taper: bool = False
    strategy: str = "S1"
    task: str = "binary"
    feature_set: str = "PIB"
    model: str = "RF"
    model_params: dict = field(default_factory=dict)
    n_trees: int = 100
    test_fraction: float = 0.10
    iterations: int = 15
    folds: int = 20
    fresh_holdout: bool = True
    select_on_all_data: bool = False
    k: int = 20
    mi_bins: int = 8
    standardize: bool = True
    seed: int = 0
    out_dir: str = "out"
    top_k: int = 10

    def __post_init__(self):
        try:
            self.feature_set = normalize_feature_set(self.feature_set)
            self.label_strategy = LabelStrategy(self.strategy, self.task)
            self.band_specs = tuple(BandSpec(str(n), float(lo), float(hi)) for n, lo, hi in self.bands)
        except (IeegPainError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        self.strategy, self.task = self.label_strategy.id, self.label_strategy.task
        self.model = str(self.model).upper()
        if self.model not in ("LR", "SVM", "RF"):
            raise ConfigError(f"unknown model {self.model!r}")

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def config_hash(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def protocol(self):
        params = dict(self.model_params)
        if self.model == "RF":
            params.setdefault("n_trees", self.n_trees)
        return ProtocolConfig(
            test_fraction=self.test_fraction, num_iterations=self.iterations, num_folds=self.folds,
            seed=self.seed, strategy=self.label_strategy, feature_set=self.feature_set,
            model_kind=self.model, model_params=params, fresh_holdout=self.fresh_holdout,
            select_on_all_data=self.select_on_all_data, k=self.k, mi_bins=self.mi_bins,
            standardize=self.standardize,
        )

    def preprocess_kw(self):
        return dict(notch_freqs=tuple(self.notch_freqs), notch_q=self.notch_q, lowpass_hz=self.lowpass_hz,
                    lowpass_order=self.lowpass_order, bad_channels=tuple(self.bad_channels),
                    zero_phase=self.zero_phase)

    def store_kw(self):
        return dict(bands=self.band_specs, discard_s=self.pib_discard_s, bandpass_order=self.bandpass_order,
                    zero_phase=self.zero_phase, segment_s=self.welch_segment_s,
                    overlap_fraction=self.welch_overlap)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name, raw):
    """Parse an environment string for field ``name`` (JSON first, then plain string)."""
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    default = RunConfig.__dataclass_fields__[name]
    sample = default.default if default.default is not dataclasses.MISSING else default.default_factory()
    if isinstance(sample, bool):
        if isinstance(value, str):
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{ENV_PREFIX}{name.upper()}: expected a boolean, got {raw!r}")
        return bool(value)
    kind = default.type if isinstance(default.type, str) else getattr(default.type, "__name__", "")
    if kind in ("int", "float") and not (isinstance(value, (int, float)) and not isinstance(value, bool)):
        raise ConfigError(f"{ENV_PREFIX}{name.upper()}: expected a number, got {raw!r}")
    if kind == "str" and not isinstance(value, str):
        value = raw
    return value


def env_overrides(environ=None):
    environ = os.environ if environ is None else environ
    out = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX) or key in _RESERVED_ENV:
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name in _FIELDS:
            out[name] = _coerce(name, raw)
    return out


def load_config(path=None, overrides=None, environ=None):
    """Defaults < file < environment < ``overrides`` (None values ignored)."""
    doc = {}
    if path:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise InputFileError(f"{path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = sorted(set(doc) - set(_FIELDS))
        if unknown:
            raise ConfigError(f"{path}: unknown keys {unknown}")
    doc.update(env_overrides(environ))
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**doc)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(path, what):
    if not path:
        raise InputFileError(f"no {what} path configured")
    if not Path(path).is_file():
        raise InputFileError(f"{what} not found: {path}")
    return path


def _load_inputs(cfg):
    rec = read_recording(_require(cfg.recording, "recording"), cfg.sample_rate_hz)
    reports = read_reports(_require(cfg.reports, "reports CSV"))
    return rec, reports


class _Stages:
    def __init__(self):
        self.done = []

    def run(self, name, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kw)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.done.append(name)
        log.info("stage %s finished in %.1fs", name, time.perf_counter() - t0)
        return out


def run_pipeline(config: RunConfig):
    """Run every stage and write the artifact directory.

    Outputs are staged in ``<out_dir>/.staging`` and moved into place only
    after all stages succeed; on failure they are moved to
    ``<out_dir>/failed/`` next to an ``error.json`` and a :class:`StageError`
    is raised.
    """
    cfg = config
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = out_dir / ".staging"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    stages = _Stages()
    notes = {}
    try:
        rec, reports = stages.run("load", _load_inputs, cfg)
        clean = stages.run("preprocess", preprocess, rec, **cfg.preprocess_kw())
        del rec

        def _label():
            trials = segment_trials(clean, reports)
            if not trials:
                raise InvalidArgumentError("no report is covered by the recording")
            return trials, label_dataset(trials, cfg.label_strategy)

        trials, ds = stages.run("label", _label)

        def _features():
            keep = set(ds.trial_labels)
            windows = [w for tr in trials if tr.trial_id in keep for w in window_trial(tr, taper=cfg.taper)]
            return FeatureStore(windows, clean.channel_names, clean.sample_rate_hz, **cfg.store_kw())

        store = stages.run("features", _features)

        def _export_features():
            write_label_histogram(staging / "label_histogram.csv", [r.vas for r in reports], cfg.label_strategy)
            write_feature_matrix(staging / "features_pib.csv", store.pib, ds.labels, ds.class_names)

        stages.run("export", _export_features)

        def _select():
            sel = select_top_k(score_electrodes(store.pib, ds.labels, cfg.mi_bins), cfg.k)
            sel.save(staging / "selection.json")
            if cfg.feature_set != "PIB" and len(sel.channels) >= 2:
                write_feature_matrix(staging / "features_msc.csv", store.msc(sel.channels), ds.labels,
                                     ds.class_names)
            return sel

        stages.run("select", _select)
        report = stages.run("evaluate", run_protocol, cfg.protocol(), ds, store)
        report.config["dataset"] = cfg.name or Path(cfg.recording).stem
        stages.run("report", report.save, staging / "report.json", staging / "report_folds.csv")

        def _network():
            if not report.feature_importances or not any(
                    k.startswith("MSC:") for k in report.feature_importances):
                notes["network"] = "skipped: needs RF importances over MSC features"
                return None
            net = build_network(report.feature_importances)
            export_network(net, staging / "network", top_k=cfg.top_k)
            return net

        stages.run("network", _network)
    except StageError as exc:
        failed = out_dir / "failed"
        if failed.exists():
            shutil.rmtree(failed)
        staging.rename(failed)
        with open(failed / "error.json", "w") as fh:
            json.dump({"stage": exc.stage, "error": f"{type(exc.cause).__name__}: {exc.cause}",
                       "completed_stages": stages.done}, fh, indent=1, sort_keys=True)
        raise

    for item in sorted(staging.iterdir()):
        target = out_dir / item.name
        if target.exists():
            target.unlink()
        item.rename(target)
    staging.rmdir()
    if (out_dir / "failed").exists():
        shutil.rmtree(out_dir / "failed")
    manifest = write_manifest(out_dir, cfg, stages.done, notes)
    return out_dir, manifest


def write_manifest(out_dir, cfg, stages_done=(), notes=None):
    out_dir = Path(out_dir)
    files = {p.name: _sha256(p) for p in sorted(out_dir.iterdir())
             if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "version": 1,
        "code_version": __version__,
        "backend": _kernels.BACKEND,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "stages": list(stages_done),
        "notes": dict(notes or {}),
        "files": files,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


# ---------------------------------------------------------------------------
# Summary tables
# ---------------------------------------------------------------------------

def percent(mean):
    """Integer percent, half rounded up, from the value's shortest decimal form."""
    return int((Decimal(repr(float(mean))) * 100).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def summarize(report_paths):
    """Rows = dataset, columns = strategy x model (first-seen order), cells = percent.

    Returns ``(columns, rows)`` where rows is a list of ``(dataset, [cell or None])``.
    """
    if not report_paths:
        raise ConfigError("summarize needs at least one report")
    cells, columns, rows = {}, [], []
    for path in report_paths:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise InputFileError(f"{path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not JSON ({exc})") from exc
        if doc.get("schema") != REPORT_SCHEMA or doc.get("version") != REPORT_VERSION:
            raise SchemaError(f"{path}: report schema {doc.get('schema')!r} v{doc.get('version')} "
                              f"is incompatible with {REPORT_SCHEMA} v{REPORT_VERSION}")
        c = doc["config"]
        col = f"{c['strategy']} {c['model_kind']}"
        row = c.get("dataset") or Path(path).parent.name or Path(path).stem
        if col not in columns:
            columns.append(col)
        if row not in rows:
            rows.append(row)
        cells[(row, col)] = percent(doc["grand_mean"])
    table = [(r, [cells.get((r, c)) for c in columns]) for r in rows]
    return columns, table


def format_summary(columns, table, fmt="csv"):
    if fmt == "markdown":
        lines = ["| dataset | " + " | ".join(columns) + " |", "|---" * (len(columns) + 1) + "|"]
        for r, vals in table:
            lines.append("| " + r + " | " + " | ".join("" if v is None else str(v) for v in vals) + " |")
        return "\n".join(lines) + "\n"
    if fmt == "text":
        return "\n".join(" ".join("-" if v is None else str(v) for v in vals) for _, vals in table) + "\n"
    rows = [",".join(["dataset"] + columns)]
    rows += [",".join([r] + ["" if v is None else str(v) for v in vals]) for r, vals in table]
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------

def _cmd_synth(args):
    cfg = SynthConfig.load(args.config) if args.config else SynthConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec, reports = generate(cfg)
    write_pnb(out / "recording.pnb", rec)
    write_reports(out / "reports.csv", reports)
    with open(out / "synth.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
    print(f"wrote {rec.n_channels} channels x {rec.duration_s:g} s and {len(reports)} reports to {out}")


def _cmd_preprocess(args, cfg):
    rec = read_recording(_require(cfg.recording, "recording"), cfg.sample_rate_hz)
    clean = preprocess(rec, **cfg.preprocess_kw())
    write_pnb(args.out, clean)
    dropped = sorted(set(rec.channel_names) - set(clean.channel_names))
    print(f"wrote {args.out}: {clean.n_channels} usable channels; dropped {dropped}")


def _dataset_for(cfg):
    rec, reports = _load_inputs(cfg)
    ds, store = build_dataset(rec, reports, cfg.label_strategy, preprocess_kw=cfg.preprocess_kw(),
                              store_kw=cfg.store_kw(), taper=cfg.taper)
    return ds, store, reports


def _cmd_features(args, cfg):
    ds, store, reports = _dataset_for(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sel = None
    if cfg.feature_set != "PIB":
        if args.selection:
            from .selection import ElectrodeSelection
            sel = ElectrodeSelection.load(args.selection).channels
        else:
            sel = select_top_k(score_electrodes(store.pib, ds.labels, cfg.mi_bins), cfg.k).channels
    fm = store.matrix(cfg.feature_set, sel)
    write_feature_matrix(out / "features.csv", fm, ds.labels, ds.class_names)
    write_label_histogram(out / "label_histogram.csv", [r.vas for r in reports], cfg.label_strategy)
    print(f"wrote {fm.shape[0]} x {fm.shape[1]} {cfg.feature_set} features to {out / 'features.csv'}")


def _cmd_select(args, cfg):
    if args.features:
        fm, labels, _ = read_feature_matrix(args.features)
        if labels is None:
            raise ConfigError(f"{args.features}: sidecar has no labels")
    else:
        ds, store, _ = _dataset_for(cfg)
        fm, labels = store.pib, ds.labels
    sel = select_top_k(score_electrodes(fm, labels, cfg.mi_bins), cfg.k)
    sel.save(args.out)
    print(f"selected {len(sel.channels)} electrodes -> {args.out}")


def _cmd_evaluate(args, cfg):
    ds, store, _ = _dataset_for(cfg)
    report = run_protocol(cfg.protocol(), ds, store)
    report.config["dataset"] = cfg.name or Path(cfg.recording).stem
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out, out.with_name(out.stem + "_folds.csv"))
    print(f"grand mean accuracy {report.grand_mean:.4f} (chance {report.chance:.3f}) -> {out}")


def _cmd_network(args, cfg):
    report = EvalReport.load(args.source)
    net = build_network(report.feature_importances)
    stem = args.out or str(Path(args.source).with_name("network"))
    paths = export_network(net, stem, top_k=args.top_k, plot=not args.no_plot)
    strength = net.node_strength
    degree = net.node_degree
    print("rank,electrode,strength,degree")
    for i, n in enumerate(top_electrodes(net, args.top_k), start=1):
        print(f"{i},{n},{strength[n]:.6f},{degree[n]}")
    log.info("network written to %s", paths)


def _cmd_summarize(args, cfg):
    columns, table = summarize(args.reports)
    text = format_summary(columns, table, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _cmd_run(args, cfg):
    out_dir, manifest = run_pipeline(cfg)
    print(f"pipeline finished: {out_dir} ({len(manifest['files'])} files, config {manifest['config_hash'][:12]})")


def _add_common(p, evaluation=False):
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--recording", help="PNB1 or CSV recording")
    p.add_argument("--reports", help="pain reports CSV (timestamp_s,vas)")
    p.add_argument("--strategy", choices=["s1", "s2", "s3", "S1", "S2", "S3"])
    p.add_argument("--task", choices=["binary", "ternary"])
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int, help="electrodes to select")
    if evaluation:
        p.add_argument("--features", dest="feature_set", choices=["pib", "msc", "both"])
        p.add_argument("--model", choices=["lr", "svm", "rf", "LR", "SVM", "RF"])
        p.add_argument("--iterations", type=int)
        p.add_argument("--folds", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="ieegpain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = sub.add_parser("synth", parents=[verbose], help="generate a synthetic recording and reports")
    p.add_argument("--config", help="synth config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("preprocess", parents=[verbose], help="notch + low-pass, drop unusable channels")
    _add_common(p)
    p.add_argument("--out", required=True, help="output PNB1 file")

    p = sub.add_parser("features", parents=[verbose], help="extract a feature matrix")
    _add_common(p)
    p.add_argument("--features", dest="feature_set", choices=["pib", "msc", "both"])
    p.add_argument("--selection", help="selection JSON for MSC electrodes")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("select", parents=[verbose], help="MI electrode selection")
    _add_common(p)
    p.add_argument("--features", help="PIB features CSV (with sidecar) instead of a recording")
    p.add_argument("--out", required=True, help="selection JSON")

    p = sub.add_parser("evaluate", parents=[verbose], help="run the cross-validation protocol")
    _add_common(p, evaluation=True)
    p.add_argument("--out", required=True, help="report JSON")

    p = sub.add_parser("network", parents=[verbose], help="pain network from an RF report")
    p.add_argument("--from", dest="source", required=True, help="report JSON")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--out", help="output stem (default: network next to the report)")
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("summarize", parents=[verbose], help="accuracy table across reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=["csv", "markdown", "text"], default="csv")
    p.add_argument("--out")

    p = sub.add_parser("run", parents=[verbose], help="full pipeline with manifest")
    _add_common(p, evaluation=True)
    p.add_argument("--out", dest="out_dir", help="artifact directory")
    return parser


_CONFIG_VERBS = {"preprocess", "features", "select", "evaluate", "run"}
_OVERRIDE_KEYS = ("recording", "reports", "strategy", "task", "seed", "k", "feature_set", "model",
                  "iterations", "folds", "out_dir")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "preprocess": _cmd_preprocess, "features": _cmd_features, "select": _cmd_select,
        "evaluate": _cmd_evaluate, "network": _cmd_network, "summarize": _cmd_summarize, "run": _cmd_run,
    }
    try:
        if args.verb == "synth":
            _cmd_synth(args)
            return 0
        cfg = None
        if args.verb in _CONFIG_VERBS:
            overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
            if args.verb == "select":
                overrides.pop("feature_set", None)
            cfg = load_config(args.config, overrides)
        handlers[args.verb](args, cfg)
        return 0
    except IeegPainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
