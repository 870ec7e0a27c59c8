"""Pydantic request/response models of the saliency service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ExplainRequest(BaseModel):
    method: str = "decomcam"
    p: int = Field(default=100, ge=1)
    q: int = Field(default=10, ge=1)
    blur_sigma: float = 10.0
    blur_kernel: int = 51
    temperature: float = 1.0
    scorer: str = "toy"
    image: str | None = None
    dump: str | None = None
    endpoint: str | None = None
    concept: str | None = None
    preset: str | None = None
    seed: int = 0


class ArtifactModel(BaseModel):
    filename: str
    png_base64: str


class ExplainResponse(BaseModel):
    method: str
    concept: str
    score: float
    singular_values: list[float]
    deltas: list[float]
    weights: list[float]
    selected_channels: list[int]
    sidecar: dict
    artifacts: list[ArtifactModel]


class EvalRequest(BaseModel):
    method: str = "decomcam"
    p: int = Field(default=100, ge=1)
    q: int = Field(default=10, ge=1)
    blur_sigma: float = 10.0
    blur_kernel: int = 51
    temperature: float = 1.0
    scorer: str = "toy"
    annotations: str
    metric_suite: str = "loc"
    dump: str | None = None
    endpoint: str | None = None
    concept: str | None = None
    preset: str | None = None
    seed: int = 0
    threads: int = Field(default=1, ge=1)


class MetricRowModel(BaseModel):
    method: str
    metric: str
    stratum: str
    value: float


class EvalResponse(BaseModel):
    rows: list[MetricRowModel]
    csv: str
    jsonl: str
    sample_failures: int
    warnings: list[str]


class MethodsResponse(BaseModel):
    methods: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorDetail(BaseModel):
    category: str  # input | config | computation
    message: str
