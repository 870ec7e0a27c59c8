"""Service-layer runners: everything the endpoints and the CLI share.

Both the FastAPI handlers and the CLI client call into this module, so
explain/eval behave identically over HTTP and in process. Runners return
artifacts as bytes/text; writing files is the client's business.
"""

from __future__ import annotations

import base64
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..annotations import AnnotationRecord, parse_annotations
from ..baselines import run_method
from ..dcam import DumpProbe, load_tensor_dump
from ..errors import (
    ComputationFailedError,
    FormatError,
    InvalidArgumentError,
    SchemaError,
)
from ..integration import ExplainResult
from ..metrics import (
    TAU_GRID,
    AnnotatedSample,
    AttributeVerdict,
    CausalSample,
    attribute_hit_frequency,
    attribute_hits,
    box_acc,
    hit_rate,
    max_box_acc_v2,
    pointing_game,
    stratified_causal_report,
)
from ..models import Scorer, ToyCnn
from ..render import encode_png, image_to_rgb, load_image, overlay_heatmap, saliency_to_rgb
from ..reports import MetricRow, render_csv, render_jsonl
from ..runconfig import RunConfig
from ..sampledata import CONCEPT, demo_sample, planted_model
from ..scoring_client import EndpointScorer


@dataclass
class Artifact:
    filename: str
    content: bytes

    def as_base64(self) -> str:
        return base64.b64encode(self.content).decode("ascii")


@dataclass
class ExplainOutcome:
    concept: str
    score: float
    singular_values: list[float]
    deltas: list[float]
    weights: list[float]
    selected_channels: list[int]
    sidecar: dict
    artifacts: list[Artifact] = field(default_factory=list)


@dataclass
class EvalOutcome:
    rows: list[MetricRow]
    csv: str
    jsonl: str
    sample_failures: int
    warnings: list[str] = field(default_factory=list)


def error_category(exc: Exception) -> str:
    """Bucket an exception for transport: input | config | computation."""
    if isinstance(exc, (FileNotFoundError, PermissionError, FormatError, SchemaError)):
        return "input"
    if isinstance(exc, InvalidArgumentError):
        return "config"
    return "computation"


class _LockedScorer:
    """Serializes score() calls for scorers that are not concurrency safe."""

    concurrency_safe = True

    def __init__(self, inner: Scorer):
        self._inner = inner
        self._lock = threading.Lock()

    def score(self, img: np.ndarray, concept: str) -> float:
        with self._lock:
            return self._inner.score(img, concept)


def _toy_model() -> ToyCnn:
    return planted_model()


def _parse_endpoint(endpoint: str) -> EndpointScorer:
    host, _, port = endpoint.rpartition(":")
    try:
        return EndpointScorer(host or "127.0.0.1", int(port))
    except ValueError:
        raise InvalidArgumentError(f"endpoint must be host:port, got {endpoint!r}") from None


def _load_sample_image(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    return load_image(path)


def _resolve_explain_inputs(cfg: RunConfig) -> tuple[Scorer | None, object, np.ndarray, str]:
    """Scorer, probe, image and concept for one explain run."""
    if cfg.scorer == "toy":
        model = _toy_model()
        if cfg.image is not None:
            img = _load_sample_image(Path(cfg.image))
        else:
            img = demo_sample(cfg.seed).image
        concept = cfg.concept or CONCEPT
        return model, model, img, concept
    if cfg.dump is None:
        raise InvalidArgumentError(f"scorer mode {cfg.scorer!r} requires --dump")
    dump_path = Path(cfg.dump)
    if not dump_path.exists():
        raise FileNotFoundError(f"dump not found: {dump_path}")
    dump = load_tensor_dump(dump_path)
    probe = DumpProbe(dump)
    img = dump.image.astype(np.float32)
    concept = cfg.concept or dump.concept
    if cfg.scorer == "dump":
        return None, probe, img, concept
    return _parse_endpoint(cfg.endpoint), probe, img, concept


def run_explain(cfg: RunConfig) -> ExplainOutcome:
    """Execute one explain request and render its artifacts."""
    cfg = cfg.resolved()
    scorer, probe, img, concept = _resolve_explain_inputs(cfg)
    result = run_method(cfg.method, scorer, probe, img, concept, cfg.decom_config())

    stem = Path(cfg.image).stem if cfg.image else (Path(cfg.dump).stem if cfg.dump else "sample")
    artifacts = [
        Artifact(f"{stem}-{cfg.method}-overlay.png", encode_png(overlay_heatmap(img, result.saliency))),
        Artifact(f"{stem}-input.png", encode_png(image_to_rgb(np.clip(img, 0.0, 1.0)))),
    ]
    singular_values: list[float] = []
    deltas = [d.delta for d in result.deltas]
    weights: list[float] = []
    if result.ossms is not None:
        singular_values = [float(v) for v in result.ossms.singular_values]
        weights = [float(w) for w in result.ossms.weights]
        for q in range(result.ossms.count):
            artifacts.append(
                Artifact(
                    f"{stem}-{cfg.method}-ossm-{q + 1:02d}.png",
                    encode_png(saliency_to_rgb(result.ossms.maps[q])),
                )
            )
    sidecar = {
        "config": cfg.echo(),
        "concept": concept,
        "score": result.score,
        "singular_values": singular_values,
        "deltas": deltas,
        "weights": weights,
        "selected_channels": result.selected_channels,
        "artifacts": [a.filename for a in artifacts],
    }
    return ExplainOutcome(
        concept=concept,
        score=result.score,
        singular_values=singular_values,
        deltas=deltas,
        weights=weights,
        selected_channels=result.selected_channels,
        sidecar=sidecar,
        artifacts=artifacts,
    )


@dataclass
class _EvalItem:
    record: AnnotationRecord
    image: np.ndarray
    concept: str
    result: ExplainResult


def _evaluate_sample(cfg: RunConfig, record: AnnotationRecord, scorer, probe_factory) -> _EvalItem:
    path = record.image_path
    if not path.exists():
        raise FileNotFoundError(f"sample image not found: {path}")
    if path.suffix == ".dcam":
        dump = load_tensor_dump(path)
        probe = DumpProbe(dump)
        img = dump.image.astype(np.float32)
        concept = cfg.concept or dump.concept
    else:
        probe = probe_factory
        img = load_image(path)
        concept = cfg.concept or record.class_name
    result = run_method(cfg.method, scorer, probe, img, concept, cfg.decom_config())
    return _EvalItem(record=record, image=img, concept=concept, result=result)


def run_eval(cfg: RunConfig) -> EvalOutcome:
    """Run the selected metric suite over an annotation set."""
    cfg = cfg.resolved()
    if cfg.annotations is None:
        raise InvalidArgumentError("eval requires an annotation file")
    annotations_path = Path(cfg.annotations)
    if not annotations_path.exists():
        raise FileNotFoundError(f"annotation file not found: {annotations_path}")
    records = parse_annotations(annotations_path)

    if cfg.scorer == "toy":
        model = _toy_model()
        scorer: Scorer = model
        probe_factory = model
    elif cfg.scorer == "dump":
        scorer = None
        probe_factory = None  # per-sample .dcam files
    else:
        scorer = _LockedScorer(_parse_endpoint(cfg.endpoint))
        probe_factory = None

    items: dict[str, _EvalItem] = {}
    failures: list[tuple[str, str]] = []

    def work(record: AnnotationRecord):
        return record.sample_id, _evaluate_sample(cfg, record, scorer, probe_factory)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = {pool.submit(work, record): record for record in records}
            for future, record in futures.items():
                try:
                    sample_id, item = future.result()
                    items[sample_id] = item
                except Exception as e:  # per-sample failure: record, continue
                    failures.append((record.sample_id, f"{error_category(e)}: {e}"))
    else:
        for record in records:
            try:
                sample_id, item = work(record)
                items[sample_id] = item
            except Exception as e:
                failures.append((record.sample_id, f"{error_category(e)}: {e}"))

    ordered = [items[k] for k in sorted(items)]
    if not ordered:
        raise ComputationFailedError("every sample failed; nothing to report")

    if cfg.metric_suite == "loc":
        rows, details = _loc_suite(cfg, ordered)
    elif cfg.metric_suite == "causal":
        if scorer is None:
            raise InvalidArgumentError("the causal suite needs a live scorer (toy or dump+live)")
        rows, details = _causal_suite(cfg, ordered, scorer)
    else:
        rows, details = _attr_suite(cfg, ordered)

    for sample_id, message in sorted(failures):
        details.append({"sample_id": sample_id, "error": message})
    config_echo = cfg.echo()
    return EvalOutcome(
        rows=rows,
        csv=render_csv(rows, config_echo),
        jsonl=render_jsonl(details, config_echo),
        sample_failures=len(failures),
        warnings=[f"{sid}: {msg}" for sid, msg in sorted(failures)],
    )


def _loc_suite(cfg: RunConfig, items: list[_EvalItem]) -> tuple[list[MetricRow], list[dict]]:
    samples = [
        AnnotatedSample(
            sample_id=item.record.sample_id,
            saliency=item.result.saliency,
            gt_boxes=item.record.boxes,
            class_name=item.record.class_name,
        )
        for item in items
    ]
    rows = [
        MetricRow(cfg.method, "maxboxaccv2", "", max_box_acc_v2(samples)),
        # published BoxAcc uses delta=0.5; report its best threshold
        MetricRow(cfg.method, "boxacc", "delta=0.5",
                  max(box_acc(samples, tau, 0.5) for tau in TAU_GRID)),
        MetricRow(cfg.method, "pg-acc", "", pointing_game(samples)),
    ]
    details = []
    for sample, item in zip(samples, items):
        details.append(
            {
                "sample_id": sample.sample_id,
                "method": cfg.method,
                "pointing_hit": pointing_game([sample]) == 1.0,
                "maxboxaccv2": max_box_acc_v2([sample]),
                "score": item.result.score,
            }
        )
    return rows, details


def _causal_suite(cfg: RunConfig, items: list[_EvalItem], scorer) -> tuple[list[MetricRow], list[dict]]:
    groups: dict[str, list[CausalSample]] = {}
    for item in items:
        groups.setdefault(item.record.class_name, []).append(
            CausalSample(
                sample_id=item.record.sample_id,
                image=item.image,
                concept=item.concept,
                saliency=item.result.saliency,
            )
        )
    stratum_rows = stratified_causal_report(groups, scorer)
    rows = []
    for r in stratum_rows:
        rows.append(MetricRow(cfg.method, "kam", r.stratum, r.kam))
        rows.append(MetricRow(cfg.method, "ram", r.stratum, r.ram))
        rows.append(MetricRow(cfg.method, "overall", r.stratum, r.overall))
    details = [
        {
            "sample_id": item.record.sample_id,
            "method": cfg.method,
            "stratum": item.record.class_name,
            "score": item.result.score,
        }
        for item in items
    ]
    return rows, details


def _attr_suite(cfg: RunConfig, items: list[_EvalItem]) -> tuple[list[MetricRow], list[dict]]:
    with_ossms = [item for item in items if item.result.ossms is not None]
    if not with_ossms:
        raise InvalidArgumentError(
            f"method {cfg.method!r} produces no sub-saliency maps; the attr suite needs them"
        )
    stacks = [item.result.ossms.maps for item in with_ossms]
    boxes = [item.record.boxes for item in with_ossms]
    rank_rows = hit_rate(stacks, boxes)
    rows = [MetricRow(cfg.method, "hitrate-strict", f"rank-{r.rank}", r.strict) for r in rank_rows]
    rows += [MetricRow(cfg.method, "hitrate-pointing", f"rank-{r.rank}", r.pointing) for r in rank_rows]

    verdicts: list[AttributeVerdict] = []
    details = []
    for item in with_ossms:
        named = [a for a in item.record.attributes if a is not None]
        hit = attribute_hits(
            item.result.ossms.maps, item.record.boxes, item.record.attributes, criterion="pointing"
        )
        for attribute in sorted(set(named)):
            verdicts.append(
                AttributeVerdict(
                    sample_id=item.record.sample_id,
                    class_name=item.record.class_name,
                    attribute=attribute,
                    hit=attribute in hit,
                )
            )
        details.append(
            {
                "sample_id": item.record.sample_id,
                "method": cfg.method,
                "attributes_hit": sorted(hit),
                "score": item.result.score,
            }
        )
    if verdicts:
        for class_name, table in attribute_hit_frequency(verdicts).items():
            for attribute, proportion in table:
                rows.append(
                    MetricRow(cfg.method, "attr-frequency", f"{class_name}/{attribute}", proportion)
                )
    return rows, details
