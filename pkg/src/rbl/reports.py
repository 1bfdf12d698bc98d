"""Report files: full JSON, one CSV row per check, and convergence tables as CSV.

The JSON layout and both CSV column orders below are part of the stable interface.
"""

import csv
import io
import json
import math
import os

CHECK_COLUMNS = ("scenario", "mode", "index", "check", "type", "verdict", "value", "lhs", "rhs",
                 "margin", "tol", "notes")
CONVERGENCE_COLUMNS = ("scenario", "index", "check", "level", "h", "value", "error", "order")


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def to_json(report):
    """Deterministic JSON text (sorted keys, non-finite numbers as null)."""
    return json.dumps(_finite(report), indent=2, sort_keys=True) + "\n"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "; ".join(str(x) for x in v)
    return str(v)


def _csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def checks_csv(report):
    rows = [dict(c, scenario=report["scenario"], mode=report["mode"]) for c in report["checks"]]
    return _csv(CHECK_COLUMNS, rows)


def convergence_csv(report, tables):
    return _csv(CONVERGENCE_COLUMNS, [dict(t, scenario=report["scenario"]) for t in tables])


def write_reports(report, output_dir, tables=None):
    """Write the report files and return their paths."""
    os.makedirs(output_dir, exist_ok=True)
    stem = os.path.join(output_dir, f"{report['scenario']}.{report['mode']}")
    paths = {"json": stem + ".json", "csv": stem + ".csv"}
    with open(paths["json"], "w") as fh:
        fh.write(to_json(report))
    with open(paths["csv"], "w") as fh:
        fh.write(checks_csv(report))
    if tables is not None:
        paths["convergence"] = stem + ".convergence.csv"
        with open(paths["convergence"], "w") as fh:
            fh.write(convergence_csv(report, tables))
    return paths
