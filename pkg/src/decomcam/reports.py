"""Deterministic CSV / JSON-lines report emission.

Both report kinds embed the fully resolved run configuration for
provenance: the CSV as a leading comment line, the JSONL as its first
record. Rows are written in a fixed order (callers pre-sort by sample
id), so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .reference import REFERENCE_RESULTS

CSV_HEADER = "method,metric,stratum,value"


@dataclass(frozen=True)
class MetricRow:
    method: str
    metric: str
    stratum: str  # stratum name, OSSM rank, or "" when not applicable
    value: float


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def format_value(value: float) -> str:
    return f"{value:.6f}"


def render_csv(rows: Sequence[MetricRow], config: dict, include_reference: bool = True) -> str:
    lines = [f"# config {_canonical_json(config)}"]
    if include_reference:
        lines.append(f"# reference {_canonical_json(REFERENCE_RESULTS)}")
    lines.append(CSV_HEADER)
    for row in rows:
        lines.append(f"{row.method},{row.metric},{row.stratum},{format_value(row.value)}")
    return "\n".join(lines) + "\n"


def render_jsonl(records: Sequence[dict], config: dict) -> str:
    lines = [_canonical_json({"config": config})]
    for record in records:
        lines.append(_canonical_json(record))
    return "\n".join(lines) + "\n"


def write_text(path: str | Path, content: str) -> None:
    # LF endings and UTF-8 regardless of platform.
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(content)
