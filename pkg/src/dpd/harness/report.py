"""Versioned JSON + CSV suite summaries."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

from .metrics import HORIZONS_S, MetricsReport

REPORT_SCHEMA_VERSION = "1"

_BUCKETS = [f"{h:g}s" for h in HORIZONS_S] + ["avg"]
CSV_COLUMNS = (
    ["scenario", "mode", "seed"]
    + [f"l2_{b}" for b in _BUCKETS]
    + [f"collision_rate_{b}" for b in _BUCKETS]
    + ["route_completion", "infraction_score", "driving_score", "slow_activation_rate",
       "collision_events", "red_light_violations"]
)


def _ordered(reports: Sequence[MetricsReport]) -> list[MetricsReport]:
    return sorted(reports, key=lambda r: (r.scenario, r.mode, r.seed))


def report_paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    json_path = path if path.suffix == ".json" else path.with_suffix(".json")
    return json_path, json_path.with_suffix(".csv")


def _row(r: MetricsReport) -> dict:
    row = {"scenario": r.scenario, "mode": r.mode, "seed": r.seed}
    for b in _BUCKETS:
        row[f"l2_{b}"] = r.l2[b]
        row[f"collision_rate_{b}"] = r.collision_rate[b]
    for k in CSV_COLUMNS[3 + 2 * len(_BUCKETS):]:
        row[k] = getattr(r, k)
    return row


def render_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in _ordered(reports):
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in _row(r).items()})
    return buf.getvalue()


def render_json(reports: Sequence[MetricsReport], include_timing: bool = False) -> str:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "reports": [r.to_dict(include_timing) for r in _ordered(reports)],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def export_report(reports: Sequence[MetricsReport], path: str | Path,
                  include_timing: bool = False) -> tuple[Path, Path]:
    """Write ``<path>.json`` and ``<path>.csv``; rows ordered by scenario name.

    Wall-clock time is left out unless asked for, so reports of identical
    runs are byte-identical.
    """
    json_path, csv_path = report_paths(path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(render_json(reports, include_timing), encoding="utf-8")
    csv_path.write_text(render_csv(reports), encoding="utf-8")
    return json_path, csv_path


def read_report(path: str | Path) -> list[MetricsReport]:
    json_path, _ = report_paths(path)
    doc = json.loads(json_path.read_text(encoding="utf-8"))
    version = doc.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise ValueError(f"{json_path}: unsupported report schema {version!r}")
    return [MetricsReport(**entry) for entry in doc["reports"]]


def read_csv_rows(path: str | Path) -> list[dict]:
    _, csv_path = report_paths(path)
    with csv_path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
