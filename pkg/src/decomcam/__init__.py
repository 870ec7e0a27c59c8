"""Decomposition-and-integration saliency toolkit."""

from .decomposition import (
    ChannelWeight,
    Decomposition,
    OssmSet,
    SelectedStack,
    build_ossms,
    channel_weights,
    select_top_p,
    svd_decompose,
    weighted_maps,
)
from .baselines import METHODS, eigencam, gradcam, run_method
from .errors import (
    ComputationFailedError,
    DecomcamError,
    FormatError,
    InvalidArgumentError,
    SchemaError,
)
from .integration import (
    DecomConfig,
    ExplainResult,
    ScoreDelta,
    blend_blurred,
    explain,
    explain_detailed,
    integrate,
    integrate_by_singular_values,
    score_deltas,
)
from .dcam import DumpProbe, TensorDump, load_tensor_dump, write_tensor_dump
from .metrics import BBox
from .models import ActivationProbe, CountingScorer, Scorer, ToyCnn
from .tensorops import bilinear_upsample, gaussian_blur, minmax_normalize, softmax

__version__ = "0.1.0"

__all__ = [
    "ActivationProbe",
    "BBox",
    "ChannelWeight",
    "ComputationFailedError",
    "CountingScorer",
    "DecomConfig",
    "Decomposition",
    "DecomcamError",
    "DumpProbe",
    "ExplainResult",
    "FormatError",
    "InvalidArgumentError",
    "METHODS",
    "OssmSet",
    "SchemaError",
    "ScoreDelta",
    "Scorer",
    "SelectedStack",
    "TensorDump",
    "ToyCnn",
    "bilinear_upsample",
    "blend_blurred",
    "build_ossms",
    "channel_weights",
    "eigencam",
    "explain",
    "explain_detailed",
    "gaussian_blur",
    "gradcam",
    "integrate",
    "integrate_by_singular_values",
    "load_tensor_dump",
    "minmax_normalize",
    "run_method",
    "score_deltas",
    "select_top_p",
    "softmax",
    "svd_decompose",
    "weighted_maps",
    "write_tensor_dump",
]
