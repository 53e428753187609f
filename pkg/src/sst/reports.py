"""CSV/JSON serialisation of state-comparison reports."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .errors import IoFailure

REPORT_COLUMNS = ("mode", "f_real_hz", "f_syn_hz", "cnf_pct", "mac")


def _fmt(value):
    return "" if value is None else repr(float(value))


def report_rows(report):
    return [
        [p.order, _fmt(p.f_real), _fmt(p.f_synthetic), _fmt(p.cnf_percent), _fmt(p.mac)]
        for p in report.pairs
    ]


def report_summary(report):
    return {
        "scenario": report.scenario,
        "average_mmsc": report.average_mmsc,
        "channel_mmsc": report.channel_mmsc,
        "modes": [
            {"mode": p.order, "f_real_hz": p.f_real, "f_syn_hz": p.f_synthetic,
             "cnf_pct": p.cnf_percent, "mac": p.mac}
            for p in report.pairs
        ],
        "unpaired_real_hz": report.unpaired_real,
        "unpaired_synthetic_hz": report.unpaired_synthetic,
    }


def write_report(report, stem):
    """Write ``<stem>.csv`` and ``<stem>.json``; returns both paths."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    try:
        stem.parent.mkdir(parents=True, exist_ok=True)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            writer.writerows(report_rows(report))
        json_path.write_text(json.dumps(report_summary(report), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write report {stem}: {exc}") from exc
    return csv_path, json_path
