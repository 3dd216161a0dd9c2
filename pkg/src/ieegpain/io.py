"""On-disk formats: PNB1 recordings, CSV imports, reports and feature tables.

PNB1 layout (all little-endian)::

    b"PNB1"                      magic
    u32                          channel count C
    f64                          sample rate (Hz)
    C x (u16 length, utf-8)      channel names
    f32[C, T]                    samples, channel-major
"""

from __future__ import annotations

import csv
import json
import struct

import numpy as np

from .errors import DataFormatError, InputFileError, InvalidArgumentError
from .signal_core import PainReport, Recording
from .spectral import FeatureMatrix

PNB_MAGIC = b"PNB1"
_HEADER = struct.Struct("<4sId")
_NAME_LEN = struct.Struct("<H")
FEATURE_SIDECAR_SCHEMA = "ieegpain.features"


def _open(path, mode, **kw):
    try:
        return open(path, mode, **kw)
    except OSError as exc:
        raise InputFileError(f"{path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------
# Recordings
# ---------------------------------------------------------------------------

def write_pnb(path, rec: Recording):
    """Write ``rec`` as a PNB1 container (samples stored as float32)."""
    names = [n.encode("utf-8") for n in rec.channel_names]
    with _open(path, "wb") as fh:
        fh.write(_HEADER.pack(PNB_MAGIC, rec.n_channels, rec.sample_rate_hz))
        for nb in names:
            if len(nb) > 0xFFFF:
                raise InvalidArgumentError("channel name too long for PNB1")
            fh.write(_NAME_LEN.pack(len(nb)))
            fh.write(nb)
        fh.write(np.ascontiguousarray(rec.samples, dtype="<f4").tobytes())


def read_pnb(path):
    """Read a PNB1 container into a :class:`Recording`."""
    with _open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DataFormatError(f"{path}: truncated PNB1 header")
        magic, n_ch, fs = _HEADER.unpack(head)
        if magic != PNB_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}, expected {PNB_MAGIC!r}")
        names = []
        for _ in range(n_ch):
            raw = fh.read(_NAME_LEN.size)
            if len(raw) < _NAME_LEN.size:
                raise DataFormatError(f"{path}: truncated channel-name table")
            (length,) = _NAME_LEN.unpack(raw)
            nb = fh.read(length)
            if len(nb) < length:
                raise DataFormatError(f"{path}: truncated channel-name table")
            try:
                names.append(nb.decode("utf-8"))
            except UnicodeDecodeError:
                raise DataFormatError(f"{path}: channel name is not UTF-8") from None
        raw = fh.read()
    if len(raw) % 4:
        raise DataFormatError(f"{path}: truncated sample body ({len(raw)} bytes)")
    body = np.frombuffer(raw, dtype="<f4")
    if n_ch == 0:
        raise DataFormatError(f"{path}: zero channels")
    if body.size % n_ch:
        raise DataFormatError(f"{path}: body of {body.size} samples is not divisible by {n_ch} channels")
    try:
        return Recording(body.reshape(n_ch, -1).astype(np.float64), fs, names)
    except InvalidArgumentError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def read_csv_recording(path, sample_rate_hz=None):
    """Import a CSV with a time column followed by one column per channel.

    The sample rate is inferred from the median time step unless given.
    """
    with _open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataFormatError(f"{path}: need a time column and at least one channel")
        try:
            data = np.array([[float(v) for v in row] for row in reader if row], dtype=np.float64)
        except ValueError as exc:
            raise DataFormatError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != len(header):
        raise DataFormatError(f"{path}: ragged or too-short table")
    t = data[:, 0]
    if sample_rate_hz is None:
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise DataFormatError(f"{path}: time column must increase strictly")
        sample_rate_hz = 1.0 / float(np.median(dt))
    return Recording(data[:, 1:].T.copy(), sample_rate_hz, [h.strip() for h in header[1:]])


def read_recording(path, sample_rate_hz=None):
    """Dispatch on content: PNB1 magic, otherwise CSV."""
    with _open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == PNB_MAGIC:
        return read_pnb(path)
    return read_csv_recording(path, sample_rate_hz)


# ---------------------------------------------------------------------------
# Pain reports
# ---------------------------------------------------------------------------

def write_reports(path, reports):
    with _open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_s", "vas"])
        for t, v in reports:
            w.writerow([repr(float(t)), int(v)])


def read_reports(path):
    """Parse a ``timestamp_s,vas`` CSV into :class:`PainReport` tuples."""
    with _open(path, "r", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["timestamp_s", "vas"]:
            raise DataFormatError(f"{path}: header must be 'timestamp_s,vas'")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                t = float(row["timestamp_s"])
                v = float(row["vas"])
            except (TypeError, ValueError):
                raise DataFormatError(f"{path}:{line}: unparsable row {row}") from None
            if v != int(v) or not 0 <= v <= 10:
                raise DataFormatError(f"{path}:{line}: VAS must be an integer in [0, 10]")
            out.append(PainReport(t, int(v)))
    return out


# ---------------------------------------------------------------------------
# Feature matrices
# ---------------------------------------------------------------------------

def sidecar_path(csv_path):
    return str(csv_path) + ".json" if not str(csv_path).endswith(".csv") else str(csv_path)[:-4] + ".json"


def write_feature_matrix(path, fm: FeatureMatrix, labels=None, class_names=None):
    """Write values as CSV and row provenance as a sidecar JSON.

    ``labels`` are per-row class ids (or None for unlabeled rows).
    """
    with _open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fm.columns)
        for row in fm.values:
            w.writerow([repr(float(v)) for v in row])
    rows = []
    for i, (t, wi) in enumerate(zip(fm.trial_ids, fm.window_indices)):
        lab = None
        if labels is not None:
            lab = int(labels[i]) if class_names is None else class_names[int(labels[i])]
        rows.append({"trial_id": int(t), "window_index": int(wi), "label": lab})
    doc = {"schema": FEATURE_SIDECAR_SCHEMA, "version": 1, "class_names": class_names,
           "flags": {k: v for k, v in fm.flags.items()}, "rows": rows}
    with _open(sidecar_path(path), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def read_feature_matrix(path):
    """Inverse of :func:`write_feature_matrix`; returns ``(FeatureMatrix, labels, class_names)``."""
    with _open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            columns = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty feature table") from None
        try:
            values = [[float(v) for v in row] for row in reader if row]
        except ValueError as exc:
            raise DataFormatError(f"{path}: {exc}") from exc
    with _open(sidecar_path(path), "r") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{sidecar_path(path)}: not JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("schema") != FEATURE_SIDECAR_SCHEMA:
        raise DataFormatError(f"{sidecar_path(path)}: not a feature sidecar")
    rows = doc["rows"]
    if len(rows) != len(values):
        raise DataFormatError(f"{path}: {len(values)} rows but sidecar lists {len(rows)}")
    arr = np.array(values, dtype=np.float64).reshape(len(values), len(columns))
    fm = FeatureMatrix(arr, columns, [r["trial_id"] for r in rows], [r["window_index"] for r in rows],
                       dict(doc.get("flags") or {}))
    class_names = doc.get("class_names")
    labels = None
    if rows and all(r["label"] is not None for r in rows):
        if class_names:
            lookup = {c: i for i, c in enumerate(class_names)}
            labels = np.array([lookup[r["label"]] for r in rows], dtype=np.intp)
        else:
            labels = np.array([r["label"] for r in rows], dtype=np.intp)
    return fm, labels, class_names
