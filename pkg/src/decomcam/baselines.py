"""Comparison methods sharing the same plumbing: GradCAM and EigenCAM.

Both emit a single saliency map at input resolution; the registry at the
bottom gives the metrics harness and the service one uniform entry point
per method name.
"""

from __future__ import annotations

import numpy as np

from .decomposition import channel_weights, weighted_maps
from .errors import ComputationFailedError, InvalidArgumentError
from .integration import DecomConfig, ExplainResult, explain_detailed
from .models import ActivationProbe, Scorer
from .tensorops import as_image, as_stack, bilinear_upsample, minmax_normalize


def gradcam(acts: np.ndarray, grads: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pooled-gradient weighted activation sum, ReLU, upsample, normalize."""
    acts = as_stack(acts, "acts")
    grads = as_stack(grads, "grads")
    if acts.shape != grads.shape:
        raise InvalidArgumentError(f"shape mismatch: acts {acts.shape} vs grads {grads.shape}")
    weights = channel_weights(grads)
    combined = weighted_maps(acts, weights).astype(np.float64).sum(axis=0)
    combined = np.maximum(combined, 0.0).astype(np.float32)
    return minmax_normalize(bilinear_upsample(combined, out_h, out_w))


def eigencam(acts: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Dominant right-singular direction of the activation matrix.

    Class-agnostic: no gradients enter. The direction's sign is fixed so
    its entry sum is >= 0, then it is upsampled and normalized like any
    other map.
    """
    acts = as_stack(acts, "acts")
    k, m, n = acts.shape
    flat = acts.reshape(k, m * n).astype(np.float64)
    try:
        _, sigma, vt = np.linalg.svd(flat, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise ComputationFailedError(f"SVD failed on {k}x{m * n} activation matrix: {e}") from e
    direction = sigma[0] * vt[0]
    if direction.sum() < 0.0:
        direction = -direction
    pattern = direction.reshape(m, n).astype(np.float32)
    return minmax_normalize(bilinear_upsample(pattern, out_h, out_w))


def _run_decomcam(scorer, probe, img, concept, cfg) -> ExplainResult:
    return explain_detailed(scorer, probe, img, concept, cfg)[2]


def _run_gradcam(scorer, probe, img, concept, cfg) -> ExplainResult:
    img = as_image(img)
    acts, grads, score = probe.probe(img, concept)
    saliency = gradcam(acts, grads, img.shape[1], img.shape[2])
    return ExplainResult(saliency=saliency, ossms=None, score=score)


def _run_eigencam(scorer, probe, img, concept, cfg) -> ExplainResult:
    img = as_image(img)
    acts, _, score = probe.probe(img, concept)
    saliency = eigencam(acts, img.shape[1], img.shape[2])
    return ExplainResult(saliency=saliency, ossms=None, score=score)


# name -> callable(scorer, probe, img, concept, cfg) -> ExplainResult
METHODS = {
    "decomcam": _run_decomcam,
    "gradcam": _run_gradcam,
    "eigencam": _run_eigencam,
}


def run_method(
    name: str,
    scorer: Scorer | None,
    probe: ActivationProbe,
    img: np.ndarray,
    concept: str,
    cfg: DecomConfig = DecomConfig(),
) -> ExplainResult:
    try:
        fn = METHODS[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown method {name!r} (registered: {', '.join(sorted(METHODS))})"
        ) from None
    return fn(scorer, probe, img, concept, cfg)
