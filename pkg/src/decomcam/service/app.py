"""FastAPI service wrapping the saliency toolkit.

Run with:  uvicorn decomcam.service:app

Errors carry a structured detail {"category", "message"}; the category
("input", "config", "computation") lets thin clients map failures to
exit codes without parsing messages.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..baselines import METHODS
from ..runconfig import RunConfig
from .runner import error_category, run_eval, run_explain
from .schemas import (
    ArtifactModel,
    EvalRequest,
    EvalResponse,
    ExplainRequest,
    ExplainResponse,
    HealthResponse,
    MethodsResponse,
    MetricRowModel,
)

_STATUS_BY_CATEGORY = {"input": 404, "config": 422, "computation": 500}


def _raise_http(exc: Exception) -> None:
    category = error_category(exc)
    raise HTTPException(
        status_code=_STATUS_BY_CATEGORY[category],
        detail={"category": category, "message": str(exc)},
    ) from exc


def _explain_config(req: ExplainRequest) -> RunConfig:
    return RunConfig(
        method=req.method,
        p=req.p,
        q=req.q,
        blur_sigma=req.blur_sigma,
        blur_kernel=req.blur_kernel,
        temperature=req.temperature,
        scorer=req.scorer,
        image=req.image,
        dump=req.dump,
        endpoint=req.endpoint,
        concept=req.concept,
        preset=req.preset,
        seed=req.seed,
    )


def _eval_config(req: EvalRequest) -> RunConfig:
    return RunConfig(
        method=req.method,
        p=req.p,
        q=req.q,
        blur_sigma=req.blur_sigma,
        blur_kernel=req.blur_kernel,
        temperature=req.temperature,
        scorer=req.scorer,
        annotations=req.annotations,
        metric_suite=req.metric_suite,
        dump=req.dump,
        endpoint=req.endpoint,
        concept=req.concept,
        preset=req.preset,
        seed=req.seed,
        threads=req.threads,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="decomcam", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/methods", response_model=MethodsResponse)
    def methods() -> MethodsResponse:
        return MethodsResponse(methods=sorted(METHODS))

    @app.post("/explain", response_model=ExplainResponse)
    def explain(req: ExplainRequest) -> ExplainResponse:
        try:
            outcome = run_explain(_explain_config(req))
        except Exception as e:
            _raise_http(e)
        return ExplainResponse(
            method=req.method,
            concept=outcome.concept,
            score=outcome.score,
            singular_values=outcome.singular_values,
            deltas=outcome.deltas,
            weights=outcome.weights,
            selected_channels=outcome.selected_channels,
            sidecar=outcome.sidecar,
            artifacts=[
                ArtifactModel(filename=a.filename, png_base64=a.as_base64())
                for a in outcome.artifacts
            ],
        )

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest) -> EvalResponse:
        try:
            outcome = run_eval(_eval_config(req))
        except Exception as e:
            _raise_http(e)
        return EvalResponse(
            rows=[
                MetricRowModel(method=r.method, metric=r.metric, stratum=r.stratum, value=r.value)
                for r in outcome.rows
            ],
            csv=outcome.csv,
            jsonl=outcome.jsonl,
            sample_failures=outcome.sample_failures,
            warnings=outcome.warnings,
        )

    return app


app = create_app()
