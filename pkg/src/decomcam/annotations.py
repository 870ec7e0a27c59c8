"""Line-delimited annotation ingestion.

One JSON object per line:

    {"id": "img-001", "image": "images/img-001.png", "class": "cat",
     "boxes": [{"x1": 10, "y1": 12, "x2": 48, "y2": 60,
                "attribute": "head"}]}

Coordinates are continuous with origin at the top-left; "attribute" is
optional per box. The image path is resolved relative to the annotation
file and may point at a PNG image or a .dcam tensor dump.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import SchemaError
from .metrics import BBox


@dataclass
class AnnotationRecord:
    sample_id: str
    image_path: Path
    class_name: str
    boxes: list[BBox]
    attributes: list[str | None]


def _parse_box(obj: dict) -> tuple[BBox, str | None]:
    try:
        box = BBox(float(obj["x1"]), float(obj["y1"]), float(obj["x2"]), float(obj["y2"]))
    except KeyError as e:
        raise ValueError(f"box is missing field {e.args[0]!r}") from None
    attribute = obj.get("attribute")
    if attribute is not None and not isinstance(attribute, str):
        raise ValueError("box attribute must be a string")
    return box, attribute


def parse_annotations(path: str | Path) -> list[AnnotationRecord]:
    """Parse an annotation file, reporting every offending line at once."""
    path = Path(path)
    records: list[AnnotationRecord] = []
    problems: list[str] = []
    seen_ids: set[str] = set()
    base = path.parent
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line is not a JSON object")
            sample_id = str(obj["id"])
            if sample_id in seen_ids:
                raise ValueError(f"duplicate sample id {sample_id!r}")
            image_path = base / str(obj["image"])
            class_name = str(obj["class"])
            raw_boxes = obj["boxes"]
            if not isinstance(raw_boxes, list) or not raw_boxes:
                raise ValueError("boxes must be a nonempty list")
            boxes, attributes = [], []
            for raw in raw_boxes:
                box, attribute = _parse_box(raw)
                boxes.append(box)
                attributes.append(attribute)
        except (ValueError, KeyError, TypeError) as e:
            detail = f"missing field {e.args[0]!r}" if isinstance(e, KeyError) else str(e)
            problems.append(f"line {line_no}: {detail}")
            continue
        seen_ids.add(sample_id)
        records.append(AnnotationRecord(sample_id, image_path, class_name, boxes, attributes))
    if problems:
        raise SchemaError(f"{path}: " + "; ".join(problems))
    if not records:
        raise SchemaError(f"{path}: no samples found")
    return records
