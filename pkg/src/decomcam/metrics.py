"""Evaluation suite: box localization, causal curves, attribute hit rates.

Box coordinates are continuous with origin at the top-left; the pixel at
row r, column c occupies [c, c+1) x [r, r+1), so the tightest box around
a pixel set uses max+1 on each axis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError
from .models import Scorer
from .tensorops import as_image, as_map2

log = logging.getLogger(__name__)

# MaxBoxAccV2 search grids.
IOU_THRESHOLDS = (0.3, 0.5, 0.7)
TAU_GRID = tuple(round(0.05 * i, 2) for i in range(20))  # 0.00 .. 0.95

# Causal-curve pixel fractions (deciles keep scorer calls at 11 per curve).
DEFAULT_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(11))

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidArgumentError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def contains(self, x: float, y: float) -> bool:
        return self.x1 <= x < self.x2 and self.y1 <= y < self.y2


@dataclass
class AnnotatedSample:
    """One saliency map with its ground truth, in a shared pixel frame."""

    sample_id: str
    saliency: np.ndarray  # (H, W) in [0, 1]
    gt_boxes: list[BBox]
    gt_mask: np.ndarray | None = None
    class_name: str | None = None
    attributes: list[str | None] | None = None  # parallel to gt_boxes


@dataclass
class CausalCurve:
    fractions: np.ndarray
    scores: np.ndarray
    auc: float


@dataclass
class CausalSample:
    """Input of a causal-faithfulness evaluation for one image."""

    sample_id: str
    image: np.ndarray  # (3, H, W)
    concept: str
    saliency: np.ndarray  # (H, W)


@dataclass
class StratumRow:
    stratum: str
    kam: float
    ram: float

    @property
    def overall(self) -> float:
        return self.kam - self.ram


@dataclass(frozen=True)
class AttributeVerdict:
    sample_id: str
    class_name: str
    attribute: str
    hit: bool


def binarize_and_box(s: np.ndarray, tau: float) -> BBox | None:
    """Tightest box around the largest 8-connected component above tau.

    Returns None when no pixel exceeds tau. Area ties pick the component
    whose box has the smaller row-major top-left corner.
    """
    s = as_map2(s, "saliency")
    if not (0.0 <= tau < 1.0):
        raise InvalidArgumentError(f"tau must be in [0, 1), got {tau}")
    mask = s > tau
    if not mask.any():
        return None
    labels, n_components = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    areas = np.bincount(labels.ravel())[1:]
    best_area = areas.max()
    best: tuple[tuple[int, int], BBox] | None = None
    for lbl in np.flatnonzero(areas == best_area) + 1:
        rows, cols = np.nonzero(labels == lbl)
        box = BBox(
            x1=float(cols.min()),
            y1=float(rows.min()),
            x2=float(cols.max() + 1),
            y2=float(rows.max() + 1),
        )
        key = (int(rows.min()), int(cols.min()))
        if best is None or key < best[0]:
            best = (key, box)
    return best[1]


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes, in [0, 1]."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def _best_iou(pred: BBox | None, gt_boxes: Sequence[BBox]) -> float:
    if pred is None:
        return 0.0
    return max(iou(pred, gt) for gt in gt_boxes)


def box_acc(samples: Sequence[AnnotatedSample], tau: float, delta: float) -> float:
    """Fraction of samples whose predicted box reaches IoU >= delta.

    The prediction scores against its best-matching ground-truth box; a
    missing prediction (nothing above tau) counts as a miss.
    """
    if not samples:
        raise InvalidArgumentError("box_acc needs a nonempty sample set")
    hits = 0
    for sample in samples:
        if not sample.gt_boxes:
            raise InvalidArgumentError(f"sample {sample.sample_id} has no ground-truth boxes")
        pred = binarize_and_box(sample.saliency, tau)
        if _best_iou(pred, sample.gt_boxes) >= delta:
            hits += 1
    return hits / len(samples)


def max_box_acc_v2(samples: Sequence[AnnotatedSample]) -> float:
    """Mean over IoU thresholds of the best box accuracy across taus."""
    if not samples:
        raise InvalidArgumentError("max_box_acc_v2 needs a nonempty sample set")
    total = 0.0
    for delta in IOU_THRESHOLDS:
        total += max(box_acc(samples, tau, delta) for tau in TAU_GRID)
    return total / len(IOU_THRESHOLDS)


def _argmax_pixel(s: np.ndarray) -> tuple[int, int]:
    flat = int(np.argmax(s))  # first maximum in row-major order
    return flat // s.shape[1], flat % s.shape[1]


def pointing_game(samples: Sequence[AnnotatedSample], criterion: str = "box") -> float:
    """Fraction of samples whose saliency argmax lands on the target.

    criterion "box" tests the pixel center against the ground-truth
    boxes; "mask" uses the ground-truth mask when a sample has one and
    falls back to boxes otherwise.
    """
    if not samples:
        raise InvalidArgumentError("pointing_game needs a nonempty sample set")
    if criterion not in ("box", "mask"):
        raise InvalidArgumentError(f"unknown pointing-game criterion {criterion!r}")
    hits = 0
    for sample in samples:
        r, c = _argmax_pixel(as_map2(sample.saliency, "saliency"))
        if criterion == "mask" and sample.gt_mask is not None:
            hits += bool(sample.gt_mask[r, c])
        else:
            if not sample.gt_boxes:
                raise InvalidArgumentError(f"sample {sample.sample_id} has no ground-truth boxes")
            hits += any(box.contains(c + 0.5, r + 0.5) for box in sample.gt_boxes)
    return hits / len(samples)


def _saliency_order(s: np.ndarray) -> np.ndarray:
    # Descending saliency; equal values keep row-major order.
    return np.argsort(-s.reshape(-1), kind="stable")


def causal_curves(
    scorer: Scorer,
    img: np.ndarray,
    concept: str,
    s: np.ndarray,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
) -> tuple[CausalCurve, CausalCurve]:
    """Keep/remove curves over the most-salient pixel fractions.

    Keep: start from the per-channel mean image and restore the top
    fraction of pixels from the original. Remove: start from the original
    and replace the top fraction with the per-channel mean. Both score
    with the supplied scorer; areas use the trapezoid rule.
    """
    img = as_image(img)
    s = as_map2(s, "saliency")
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.ndim != 1 or fr.size < 2 or fr[0] != 0.0 or fr[-1] != 1.0 or np.any(np.diff(fr) <= 0):
        raise InvalidArgumentError("fractions must increase strictly from 0 to 1")
    if s.shape != img.shape[1:]:
        raise InvalidArgumentError(f"saliency {s.shape} does not match image {img.shape[1:]}")

    n_pixels = s.size
    order = _saliency_order(s)
    mean_img = np.broadcast_to(
        img.mean(axis=(1, 2), dtype=np.float64).astype(np.float32)[:, None, None], img.shape
    )

    flat_img = img.reshape(3, -1)
    flat_mean = np.ascontiguousarray(mean_img.reshape(3, -1))

    kam_scores, ram_scores = [], []
    for t in fr:
        k = int(round(t * n_pixels))
        top = order[:k]
        kept = flat_mean.copy()
        kept[:, top] = flat_img[:, top]
        kam_scores.append(scorer.score(kept.reshape(img.shape), concept))
        removed = flat_img.copy()
        removed[:, top] = flat_mean[:, top]
        ram_scores.append(scorer.score(removed.reshape(img.shape), concept))

    kam = CausalCurve(fr, np.asarray(kam_scores), float(np.trapezoid(kam_scores, fr)))
    ram = CausalCurve(fr, np.asarray(ram_scores), float(np.trapezoid(ram_scores, fr)))
    return kam, ram


def normalized_auc(curve: CausalCurve, reference_score: float) -> float:
    """Curve area as a percentage of the full-image score."""
    if abs(reference_score) < 1e-12:
        return 0.0
    return 100.0 * curve.auc / reference_score


def stratified_causal_report(
    groups: dict[str, Sequence[CausalSample]],
    scorer: Scorer,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
) -> list[StratumRow]:
    """Per-stratum mean keep/remove areas plus a cross-stratum aggregate.

    Scores are normalized per sample by the original image's score, so
    rows are percentages. Empty strata are skipped with a warning. The
    final row aggregates the per-stratum means (unweighted).
    """
    rows: list[StratumRow] = []
    for stratum in sorted(groups):
        samples = groups[stratum]
        if not samples:
            log.warning("stratum %r is empty; skipped", stratum)
            continue
        kams, rams = [], []
        for sample in samples:
            kam, ram = causal_curves(scorer, sample.image, sample.concept, sample.saliency, fractions)
            reference = kam.scores[-1]  # == f(original image)
            kams.append(normalized_auc(kam, reference))
            rams.append(normalized_auc(ram, reference))
        rows.append(StratumRow(stratum, float(np.mean(kams)), float(np.mean(rams))))
    if not rows:
        raise InvalidArgumentError("all strata were empty")
    rows.append(
        StratumRow(
            "aggregate",
            float(np.mean([r.kam for r in rows])),
            float(np.mean([r.ram for r in rows])),
        )
    )
    return rows


def _strict_localization(s: np.ndarray, boxes: Sequence[BBox]) -> float:
    """Per-sample MaxBoxAccV2 of one map against a set of boxes."""
    total = 0.0
    for delta in IOU_THRESHOLDS:
        total += max(
            float(_best_iou(binarize_and_box(s, tau), boxes) >= delta) for tau in TAU_GRID
        )
    return total / len(IOU_THRESHOLDS)


def _pointing_hit(s: np.ndarray, boxes: Sequence[BBox]) -> bool:
    r, c = _argmax_pixel(s)
    return any(box.contains(c + 0.5, r + 0.5) for box in boxes)


@dataclass
class HitRateRow:
    rank: int  # 1-based OSSM rank
    strict: float  # mean per-sample MaxBoxAccV2 verdict
    pointing: float  # fraction of argmax hits
    samples: int


def hit_rate(
    ossms_per_sample: Sequence[np.ndarray],
    attribute_boxes_per_sample: Sequence[Sequence[BBox]],
) -> list[HitRateRow]:
    """How often the rank-i map localizes at least one annotated attribute.

    ``ossms_per_sample[j]`` is the (Q_j, H, W) map stack of sample j. The
    strict column applies the MaxBoxAccV2 criterion against the sample's
    attribute boxes ("any attribute" matching); the pointing column tests
    the argmax pixel. Rank i averages over the samples that have at least
    i maps.
    """
    if len(ossms_per_sample) != len(attribute_boxes_per_sample):
        raise InvalidArgumentError("sample count mismatch between maps and annotations")
    if not ossms_per_sample:
        raise InvalidArgumentError("hit_rate needs a nonempty sample set")
    for j, boxes in enumerate(attribute_boxes_per_sample):
        if not boxes:
            raise InvalidArgumentError(f"sample {j} has no attribute boxes")

    max_rank = max(stack.shape[0] for stack in ossms_per_sample)
    rows = []
    for rank in range(max_rank):
        strict, pointing, count = 0.0, 0, 0
        for stack, boxes in zip(ossms_per_sample, attribute_boxes_per_sample):
            if rank >= stack.shape[0]:
                continue
            strict += _strict_localization(stack[rank], boxes)
            pointing += _pointing_hit(stack[rank], boxes)
            count += 1
        rows.append(HitRateRow(rank + 1, strict / count, pointing / count, count))
    return rows


def attribute_hits(
    ossms: np.ndarray,
    boxes: Sequence[BBox],
    attributes: Sequence[str | None],
    criterion: str = "pointing",
) -> set[str]:
    """Attributes identified by any map of the stack.

    "pointing": some map's argmax lies in the attribute's box. "strict":
    some map localizes the box under the MaxBoxAccV2 criterion with a
    positive verdict.
    """
    if criterion not in ("pointing", "strict"):
        raise InvalidArgumentError(f"unknown criterion {criterion!r}")
    hit: set[str] = set()
    for box, attribute in zip(boxes, attributes):
        if attribute is None:
            continue
        for q in range(ossms.shape[0]):
            if criterion == "pointing":
                if _pointing_hit(ossms[q], [box]):
                    hit.add(attribute)
                    break
            else:
                if _strict_localization(ossms[q], [box]) > 0.0:
                    hit.add(attribute)
                    break
    return hit


def attribute_hit_frequency(
    verdicts: Sequence[AttributeVerdict],
) -> dict[str, list[tuple[str, float]]]:
    """Per class, attributes ranked by hit share.

    Proportions are normalized by the class's total hit count; ranking
    ties break alphabetically. Classes with zero hits report 0.0 for
    every seen attribute.
    """
    per_class: dict[str, dict[str, int]] = {}
    for verdict in verdicts:
        counts = per_class.setdefault(verdict.class_name, {})
        counts.setdefault(verdict.attribute, 0)
        if verdict.hit:
            counts[verdict.attribute] += 1
    tables: dict[str, list[tuple[str, float]]] = {}
    for class_name, counts in sorted(per_class.items()):
        total = sum(counts.values())
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        tables[class_name] = [
            (attribute, count / total if total else 0.0) for attribute, count in ranked
        ]
    return tables
