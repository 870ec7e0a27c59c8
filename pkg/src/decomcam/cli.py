"""Thin command-line client of the saliency service.

By default requests run against an in-process service instance; pass
--server to talk to a remote one over HTTP. Either way the CLI only
builds requests, writes returned artifacts and maps error categories to
exit codes:

    0  success
    1  computation failure
    2  unreadable input (missing image/dump/annotations, bad format)
    3  eval finished but some samples failed
    64 configuration error
"""

from __future__ import annotations

import base64
import json
import sys
from pathlib import Path

import click

from .service.runner import error_category, run_eval, run_explain
from .service.schemas import EvalRequest, ExplainRequest
from .runconfig import RunConfig

EXIT_BY_CATEGORY = {"computation": 1, "input": 2, "config": 64}


class CliFailure(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


def _fail(category: str, message: str) -> CliFailure:
    return CliFailure(EXIT_BY_CATEGORY.get(category, 1), f"error ({category}): {message}")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise _fail("input", f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise _fail("config", f"config file {p} is not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise _fail("config", f"config file {p} must hold a JSON object")
    return obj


def _merge_params(ctx: click.Context, config_file: dict, names: list[str]) -> dict:
    """Defaults < config file < explicit flags."""
    merged = {}
    for name in names:
        merged[name] = ctx.params[name]
        source = ctx.get_parameter_source(name)
        if source is not None and source.name != "COMMANDLINE" and name in config_file:
            merged[name] = config_file[name]
    unknown = set(config_file) - set(names)
    if unknown:
        raise _fail("config", f"unknown config file keys: {', '.join(sorted(unknown))}")
    return merged


def _post(server: str, route: str, payload: dict) -> dict:
    import httpx

    try:
        response = httpx.post(f"{server.rstrip('/')}{route}", json=payload, timeout=600.0)
    except httpx.HTTPError as e:
        raise _fail("computation", f"cannot reach server {server}: {e}") from None
    if response.status_code == 200:
        return response.json()
    try:
        detail = response.json()["detail"]
        category, message = detail["category"], detail["message"]
    except Exception:
        category, message = "computation", f"HTTP {response.status_code}: {response.text[:500]}"
    if response.status_code == 422 and not isinstance(detail, dict):
        category, message = "config", str(detail)
    raise _fail(category, message)


def _write_artifacts(out_dir: Path, artifacts: list[dict]) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for artifact in artifacts:
        path = out_dir / artifact["filename"]
        path.write_bytes(base64.b64decode(artifact["png_base64"]))
        written.append(path)
    return written


_COMMON = [
    click.option("--method", default="decomcam", show_default=True, help="Attribution method."),
    click.option("--p", default=100, show_default=True, help="Channels kept by top-P selection."),
    click.option("--q", default=10, show_default=True, help="Number of sub-saliency maps."),
    click.option("--blur-sigma", default=10.0, show_default=True, help="Gaussian blur sigma."),
    click.option("--blur-kernel", default=51, show_default=True, help="Odd blur kernel size."),
    click.option("--temperature", default=1.0, show_default=True, help="Softmax temperature."),
    click.option(
        "--scorer",
        default="toy",
        show_default=True,
        type=click.Choice(["toy", "dump", "dump+live"]),
        help="Scorer mode: built-in toy model, static dump, or dump plus live endpoint.",
    ),
    click.option("--dump", default=None, help="DCAM tensor dump (scorer modes dump/dump+live)."),
    click.option("--endpoint", default=None, help="host:port of a live scoring endpoint."),
    click.option("--concept", default=None, help="Concept to explain (defaults per scorer mode)."),
    click.option("--preset", default=None, help="Named (p, q) preset, e.g. imagenetv2."),
    click.option("--out-dir", default=".", show_default=True, help="Artifact output directory."),
    click.option("--seed", default=0, show_default=True, help="Seed for bundled sample data."),
    click.option("--config", default=None, help="JSON config file; flags override its values."),
    click.option("--server", default=None, help="Remote service URL (default: in-process)."),
]


def _with_common(fn):
    for option in reversed(_COMMON):
        fn = option(fn)
    return fn


@click.group()
def main() -> None:
    """Saliency explanations and metric suites, as a thin service client."""


@main.command("explain")
@_with_common
@click.option("--image", default=None, help="Input image (PNG); defaults to a bundled sample.")
@click.pass_context
def cmd_explain(ctx: click.Context, **kwargs) -> None:
    """Explain one image: saliency overlay, OSSM gallery, JSON sidecar."""
    try:
        file_cfg = _load_config_file(kwargs["config"])
        names = [n for n in kwargs if n not in ("config", "server")]
        params = _merge_params(ctx, file_cfg, names)
        request = ExplainRequest(**{k: v for k, v in params.items() if k != "out_dir"})
        if kwargs["server"]:
            payload = _post(kwargs["server"], "/explain", request.model_dump())
        else:
            try:
                outcome = run_explain(_to_runconfig(request, out_dir=params["out_dir"]))
            except Exception as e:
                raise _fail(error_category(e), str(e)) from None
            payload = {
                "score": outcome.score,
                "concept": outcome.concept,
                "weights": outcome.weights,
                "sidecar": outcome.sidecar,
                "artifacts": [
                    {"filename": a.filename, "png_base64": a.as_base64()}
                    for a in outcome.artifacts
                ],
            }
        out_dir = Path(params["out_dir"])
        written = _write_artifacts(out_dir, payload["artifacts"])
        sidecar_path = out_dir / "sidecar.json"
        sidecar_path.write_text(
            json.dumps(payload["sidecar"], sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        click.echo(f"concept: {payload['concept']}  score: {payload['score']:.6f}")
        if payload["weights"]:
            click.echo("weights: " + " ".join(f"{w:.4f}" for w in payload["weights"]))
        for path in written + [sidecar_path]:
            click.echo(f"wrote {path}")
    except CliFailure as failure:
        click.echo(str(failure), err=True)
        sys.exit(failure.exit_code)


@main.command("eval")
@_with_common
@click.option("--annotations", required=True, help="Line-delimited annotation file (JSONL).")
@click.option(
    "--metric-suite",
    default="loc",
    show_default=True,
    type=click.Choice(["loc", "causal", "attr"]),
    help="Which metric family to run.",
)
@click.option("--threads", default=1, show_default=True, help="Worker threads across samples.")
@click.pass_context
def cmd_eval(ctx: click.Context, **kwargs) -> None:
    """Evaluate a method against an annotation set; write CSV/JSONL reports."""
    try:
        file_cfg = _load_config_file(kwargs["config"])
        names = [n for n in kwargs if n not in ("config", "server")]
        params = _merge_params(ctx, file_cfg, names)
        request = EvalRequest(**{k: v for k, v in params.items() if k != "out_dir"})
        if kwargs["server"]:
            payload = _post(kwargs["server"], "/eval", request.model_dump())
        else:
            try:
                outcome = run_eval(_to_runconfig(request, out_dir=params["out_dir"]))
            except Exception as e:
                raise _fail(error_category(e), str(e)) from None
            payload = {
                "rows": [
                    {"method": r.method, "metric": r.metric, "stratum": r.stratum, "value": r.value}
                    for r in outcome.rows
                ],
                "csv": outcome.csv,
                "jsonl": outcome.jsonl,
                "sample_failures": outcome.sample_failures,
                "warnings": outcome.warnings,
            }
        out_dir = Path(params["out_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        suite = params["metric_suite"]
        csv_path = out_dir / f"eval-{suite}.csv"
        jsonl_path = out_dir / f"eval-{suite}.jsonl"
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload["csv"])
        with open(jsonl_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload["jsonl"])
        for row in payload["rows"]:
            stratum = row["stratum"] or "-"
            click.echo(f"{row['method']}  {row['metric']}  {stratum}  {row['value']:.6f}")
        for warning in payload["warnings"]:
            click.echo(f"sample failure: {warning}", err=True)
        click.echo(f"wrote {csv_path}")
        click.echo(f"wrote {jsonl_path}")
        if payload["sample_failures"]:
            click.echo(f"{payload['sample_failures']} sample(s) failed", err=True)
            sys.exit(3)
    except CliFailure as failure:
        click.echo(str(failure), err=True)
        sys.exit(failure.exit_code)


def _to_runconfig(request, out_dir: str) -> RunConfig:
    fields = request.model_dump()
    fields["out_dir"] = out_dir
    return RunConfig(**fields)


if __name__ == "__main__":
    main()
