"""Resolved run configuration shared by the service and the CLI."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .baselines import METHODS
from .errors import InvalidArgumentError
from .integration import DecomConfig
from .reference import PRESETS

SCORER_MODES = ("toy", "dump", "dump+live")
METRIC_SUITES = ("loc", "causal", "attr")


@dataclass(frozen=True)
class RunConfig:
    method: str = "decomcam"
    p: int = 100
    q: int = 10
    blur_sigma: float = 10.0
    blur_kernel: int = 51
    temperature: float = 1.0
    scorer: str = "toy"
    image: str | None = None
    dump: str | None = None
    annotations: str | None = None
    metric_suite: str = "loc"
    out_dir: str = "."
    seed: int = 0
    threads: int = 1
    endpoint: str | None = None  # host:port for scorer mode "dump+live"
    concept: str | None = None
    preset: str | None = None  # named (p, q) override, see reference.PRESETS

    def resolved(self) -> "RunConfig":
        cfg = self
        if cfg.preset is not None:
            try:
                override = PRESETS[cfg.preset]
            except KeyError:
                raise InvalidArgumentError(
                    f"unknown preset {cfg.preset!r} (known: {', '.join(sorted(PRESETS))})"
                ) from None
            cfg = replace(cfg, **override)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.method not in METHODS:
            raise InvalidArgumentError(
                f"unknown method {self.method!r} (registered: {', '.join(sorted(METHODS))})"
            )
        if self.scorer not in SCORER_MODES:
            raise InvalidArgumentError(
                f"unknown scorer mode {self.scorer!r} (expected one of {', '.join(SCORER_MODES)})"
            )
        if self.metric_suite not in METRIC_SUITES:
            raise InvalidArgumentError(
                f"unknown metric suite {self.metric_suite!r} "
                f"(expected one of {', '.join(METRIC_SUITES)})"
            )
        if self.threads < 1:
            raise InvalidArgumentError(f"threads must be >= 1, got {self.threads}")
        if self.scorer == "dump+live" and not self.endpoint:
            raise InvalidArgumentError("scorer mode 'dump+live' requires an endpoint (host:port)")
        self.decom_config()  # validates p/q/blur/temperature

    def decom_config(self) -> DecomConfig:
        weighting = "singular" if self.scorer == "dump" else "score"
        return DecomConfig(
            p=self.p,
            q=self.q,
            blur_sigma=self.blur_sigma,
            blur_kernel=self.blur_kernel,
            temperature=self.temperature,
            weighting=weighting,
        ).validated()

    def echo(self) -> dict:
        """JSON-serializable resolved config for report provenance."""
        return asdict(self)
