"""Record CSV serialisation and ingestion of recorded lab logs.

Layout: ``#`` comment lines with ``key=value`` metadata (at least
``sample_rate_hz``), then the header ``t_s,ch1_V,ch2_V,ch3_V,ch4_V`` and one
row per sample.  UTF-8, LF line endings, decimal point.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..sensor_model import TimeSeriesRecord

RECORD_FORMAT = "record-csv/1"
RECORD_HEADER = ["t_s", "ch1_V", "ch2_V", "ch3_V", "ch4_V"]
CSV_SCHEMA_VERSION = "1"


class IngestionError(ValueError):
    pass


def _fmt_meta(value) -> str:
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(value, separators=(",", ":"))
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_meta(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def write_record(record: TimeSeriesRecord, path) -> Path:
    if record.n_channels != 4:
        raise ValueError("record CSV holds exactly four channels")
    path = Path(path)
    meta = {"schema": RECORD_FORMAT, "sample_rate_hz": float(record.sample_rate)}
    meta.update({k: v for k, v in record.meta.items() if k not in meta})
    t = record.times()
    data = np.column_stack([t, record.channels.T])
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={_fmt_meta(v)}\n")
    buf.write(",".join(RECORD_HEADER) + "\n")
    np.savetxt(buf, data, fmt="%.17g", delimiter=",")
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")
    return path


def ingest(path, fmt: str = RECORD_FORMAT) -> TimeSeriesRecord:
    """Read and validate a record CSV, naming the offending row on failure."""
    if fmt != RECORD_FORMAT:
        raise IngestionError(f"unsupported format {fmt!r}; only {RECORD_FORMAT!r} is known")
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"{path}: no such file")
    meta: dict = {}
    rows: list[list[float]] = []
    header_seen = False
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = _parse_meta(v.strip())
                continue
            fields = next(csv.reader([line]))
            if not header_seen:
                if fields != RECORD_HEADER:
                    if len(fields) != len(RECORD_HEADER):
                        raise IngestionError(
                            f"{path}:{lineno}: header has {len(fields) - 1} channels, expected 4 "
                            f"({','.join(RECORD_HEADER)})"
                        )
                    raise IngestionError(f"{path}:{lineno}: header {fields} does not match {RECORD_HEADER}")
                header_seen = True
                continue
            if len(fields) != len(RECORD_HEADER):
                raise IngestionError(
                    f"{path}:{lineno}: row has {len(fields)} columns, expected {len(RECORD_HEADER)} "
                    f"(time + 4 channels)"
                )
            try:
                vals = [float(x) for x in fields]
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: unparsable number ({exc})") from None
            if any(math.isnan(v) for v in vals):
                raise IngestionError(f"{path}:{lineno}: NaN value")
            if rows and vals[0] <= rows[-1][0]:
                raise IngestionError(f"{path}:{lineno}: time {vals[0]} is not after {rows[-1][0]}")
            rows.append(vals)
    if not header_seen:
        raise IngestionError(f"{path}: missing header row {','.join(RECORD_HEADER)}")
    if len(rows) < 2:
        raise IngestionError(f"{path}: fewer than two samples")
    data = np.array(rows)
    fs = meta.get("sample_rate_hz")
    if fs is None:
        fs = (len(rows) - 1) / (data[-1, 0] - data[0, 0])
    fs = float(fs)
    dt = np.diff(data[:, 0])
    bad = np.flatnonzero(np.abs(dt * fs - 1.0) > 1e-6)
    if bad.size:
        raise IngestionError(f"{path}: sample {bad[0] + 1} breaks uniform sampling at {fs} Hz")
    meta.pop("schema", None)
    meta.pop("sample_rate_hz", None)
    return TimeSeriesRecord(fs, data[:, 1:].T.copy(), meta, t0=float(data[0, 0]))


def write_table(path, header: list[str], rows, comment: dict | None = None) -> Path:
    """Plot-ready CSV with a schema-version comment line."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(f"# schema_version={CSV_SCHEMA_VERSION}\n")
    for k, v in (comment or {}).items():
        buf.write(f"# {k}={_fmt_meta(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")
    return path


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def detect_cycle_markers(x, hysteresis: float = 0.2) -> np.ndarray:
    """Rising zero crossings with a Schmitt trigger at +/- ``hysteresis`` x RMS."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    level = hysteresis * math.sqrt(np.mean(x**2))
    if level == 0:
        return np.array([], dtype=np.int64)
    markers = []
    armed = False
    for i, v in enumerate(x):
        if v < -level:
            armed = True
        elif armed and v > level:
            # back up to the actual crossing
            j = i
            while j > 0 and x[j - 1] > 0:
                j -= 1
            markers.append(j)
            armed = False
    return np.array(markers, dtype=np.int64)
