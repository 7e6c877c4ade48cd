"""Run-directory artifacts: JSON reports, versioned CSV tables, summaries."""
import csv
import hashlib
import io
import json
import math
import os
from datetime import datetime, timezone
from importlib import resources

import jsonschema
import numpy as np

from .errors import ConfigError

FORMAT_VERSION = 1
CSV_MAGIC = "# cocyclelab-csv"
OUT_ENV = "COCYCLELAB_OUT"
DEFAULT_OUT = "runs"
REPORT_NAME = "report.json"


def default_out_dir():
    return os.environ.get(OUT_ENV) or DEFAULT_OUT


def jsonable(v):
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    return v


def dumps(obj):
    """Canonical JSON (sorted keys) used for files and hashes."""
    return json.dumps(jsonable(obj), sort_keys=True, indent=1, allow_nan=False)


def content_hash(obj):
    return hashlib.sha256(json.dumps(jsonable(obj), sort_keys=True,
                                     separators=(",", ":")).encode()).hexdigest()


def timestamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# config

def load_schema():
    text = resources.files("cocyclelab").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}") from None
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return validate_config(cfg)


# CSV

def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def csv_text(columns, rows):
    """CSV body (no header line): column names then rows, floats as repr."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, when=None):
    with open(path, "w", newline="") as fh:
        fh.write(f"{CSV_MAGIC} v{FORMAT_VERSION} {when or timestamp()}\n")
        fh.write(csv_text(columns, rows))


def read_csv(path):
    """(version, columns, rows as strings); rejects files without the header line."""
    with open(path, newline="") as fh:
        head = fh.readline()
        if not head.startswith(CSV_MAGIC):
            raise ValueError(f"{path}: missing version header")
        version = int(head.split()[2].lstrip("v"))
        rows = list(csv.reader(fh))
    return version, rows[0], rows[1:]


# reports

def write_report(directory, report, tables=None):
    """Write report.json and ``tables`` = {name: (columns, rows)} as CSV files."""
    os.makedirs(directory, exist_ok=True)
    when = timestamp()
    files = []
    for name, (columns, rows) in (tables or {}).items():
        fname = f"{name}.csv"
        write_csv(os.path.join(directory, fname), columns, rows, when)
        files.append(fname)
    body = dict(report)
    body["files"] = sorted(files)
    body["format_version"] = FORMAT_VERSION
    body["created"] = when
    with open(os.path.join(directory, REPORT_NAME), "w") as fh:
        fh.write(dumps(body) + "\n")
    return os.path.join(directory, REPORT_NAME)


def read_report(path):
    with open(path) as fh:
        return json.load(fh)


def _report_paths(run_dir):
    out = []
    for root, _, names in os.walk(run_dir):
        if REPORT_NAME in names:
            out.append(os.path.join(root, REPORT_NAME))
    return sorted(out)


def report_summary(run_dir):
    """Merge every report.json under ``run_dir`` into one summary.

    The summary hash covers verdicts, margins and config hashes but not
    timestamps, so reruns with the same seed hash identically.
    """
    paths = _report_paths(run_dir)
    if not paths:
        raise FileNotFoundError(f"no {REPORT_NAME} under {run_dir}")
    runs = []
    for p in paths:
        try:
            rep = read_report(p)
            runs.append({"path": os.path.relpath(os.path.dirname(p), run_dir),
                         "pipeline": rep["pipeline"], "verdict": rep["verdict"],
                         "margin": rep.get("margin"), "config_hash": rep["config_hash"]})
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise ValueError(f"corrupt report {p}: {e}") from None
    failing = sorted({r["pipeline"] for r in runs if r["verdict"] != "pass"})
    margins = [r["margin"] for r in runs if isinstance(r["margin"], (int, float))]
    summary = {"verdict": "fail" if failing else "pass", "runs": runs, "failing": failing,
               "worst_margin": min(margins) if margins else None,
               "config_hashes": sorted({r["config_hash"] for r in runs})}
    summary["summary_hash"] = content_hash(summary)
    return summary
