"""CSV and JSON emission for experiment results.

Floats are written with ``repr`` (shortest round-trip form), so a CSV cell
parses back to the identical double. Wall times go to a separate timing file;
the result files themselves depend only on the configuration and seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields, is_dataclass
from pathlib import Path

REPORT_COLUMNS = (
    "method",
    "repeat",
    "target_id",
    "surrogate_error",
    "nfp_error",
    "sigma_aleatoric_sum",
    "sigma_epistemic_sum",
    "seed",
    "alpha",
    "beta",
)


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    if hasattr(v, "item") and callable(v.item):
        return v.item()
    return v


def report_rows_table(rows):
    """Header and cell rows for ReportRows; designs expand into x0..x{d-1}."""
    d = len(rows[0].design) if rows else 0
    header = list(REPORT_COLUMNS) + [f"x{i}" for i in range(d)]
    body = [[_cell(getattr(r, c)) for c in REPORT_COLUMNS] + [_cell(v) for v in r.design] for r in rows]
    return header, body


def dataclass_table(items):
    """Header and cell rows for a homogeneous list of dataclass instances (tuples are expanded)."""
    if not items:
        return [], []
    header, body = [], []
    for f in fields(items[0]):
        v = getattr(items[0], f.name)
        header.extend([f"{f.name}{i}" for i in range(len(v))] if isinstance(v, tuple) else [f.name])
    for it in items:
        row = []
        for f in fields(it):
            v = getattr(it, f.name)
            row.extend([_cell(u) for u in v] if isinstance(v, tuple) else [_cell(v)])
        body.append(row)
    return header, body


def write_csv(path, header, body):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)


def write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=False) + "\n")


def _plain(item):
    return asdict(item) if is_dataclass(item) else item


def write_table(stem, items, kind="dataclass"):
    """Write ``<stem>.csv`` and its ``<stem>.json`` mirror; returns both paths."""
    stem = Path(stem)
    if kind == "report":
        header, body = report_rows_table(items)
        docs = [dict(zip(REPORT_COLUMNS, (getattr(r, c) for c in REPORT_COLUMNS)), design=list(r.design)) for r in items]
    else:
        header, body = dataclass_table(items)
        docs = [_plain(i) for i in items]
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    write_csv(csv_path, header, body)
    write_json(json_path, docs)
    return csv_path, json_path


def write_benchmark(out_dir, report, config_dict=None):
    """Emit rows, summary, sweep log and failures; timings go to ``timing.json``."""
    out = Path(out_dir)
    paths = {}
    paths["rows"] = write_table(out / "bench", report.rows, kind="report")
    paths["summary"] = write_table(out / "summary", report.summary)
    sweeps = [
        {"method": m, "repeat": k, "alpha": e.alpha, "beta": e.beta, "score": e.score, "phase": e.phase}
        for (m, k), log in sorted(report.sweeps.items()) for e in log
    ]
    write_json(out / "sweeps.json", sweeps)
    write_json(out / "failures.json", [_plain(f) for f in report.failures])
    if config_dict is not None:
        write_json(out / "config.json", config_dict)
    write_json(out / "timing.json", [{"method": m, "repeat": k, "seconds": s} for (m, k), s in sorted(report.timings.items())])
    return paths


def read_report_csv(path):
    """Parse a ``bench.csv`` back into dicts with float-valued numeric cells."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ints = {"repeat", "target_id", "seed"}
    for r in rows:
        for k, v in r.items():
            if k == "method":
                continue
            r[k] = int(v) if k in ints else float(v)
    return rows
