"""Decomposition stage: gradient weighting, channel selection, SVD, OSSMs.

Pipeline: pooled gradient weights -> class-discriminative maps -> top-P
selection -> SVD of the selected P x (M*N) matrix -> Q orthogonal
sub-saliency maps upsampled to input resolution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ComputationFailedError, InvalidArgumentError
from .tensorops import as_stack, bilinear_upsample, minmax_normalize

log = logging.getLogger(__name__)

# Trailing singular values below this fraction of the largest are treated
# as numerically zero when clamping Q to the available rank.
RANK_TOLERANCE = 1e-7


@dataclass(frozen=True)
class ChannelWeight:
    """Pooled-gradient importance of one channel."""

    channel_index: int
    weight: float


@dataclass
class SelectedStack:
    """Top-P class-discriminative maps, one flattened map per row."""

    rows: np.ndarray  # (P, M*N) float32
    source_channels: list[int]
    spatial_shape: tuple[int, int]


@dataclass
class Decomposition:
    """Top-Q singular components of a selected stack.

    ``components[i]`` is the i-th component reshaped to (M, N); its
    pre-normalization rows are pairwise orthogonal and its L2 norm equals
    ``singular_values[i]``.
    """

    singular_values: np.ndarray  # (Q,) float64, non-increasing
    components: np.ndarray  # (Q, M, N) float32
    left_vectors: np.ndarray  # (Q, P) float64


@dataclass
class OssmSet:
    """Orthogonal sub-saliency maps at input resolution, each in [0, 1]."""

    maps: np.ndarray  # (Q, H, W) float32
    singular_values: np.ndarray  # (Q,) float64
    weights: np.ndarray = field(default=None)  # (Q,) float32, sums to 1

    def __post_init__(self):
        if self.weights is None:
            q = self.maps.shape[0]
            self.weights = np.full(q, 1.0 / q, dtype=np.float32)

    @property
    def count(self) -> int:
        return int(self.maps.shape[0])


def channel_weights(grads: np.ndarray) -> list[ChannelWeight]:
    """Global-average-pool each gradient channel into a scalar weight.

    The normalization coefficient is the spatial size M*N, so the weight
    is the per-channel mean gradient.
    """
    grads = as_stack(grads, "grads")
    means = grads.mean(axis=(1, 2), dtype=np.float64)
    return [ChannelWeight(k, float(w)) for k, w in enumerate(means)]


def weighted_maps(acts: np.ndarray, weights: list[ChannelWeight]) -> np.ndarray:
    """Scale each activation map by its channel weight."""
    acts = as_stack(acts, "acts")
    if len(weights) != acts.shape[0]:
        raise InvalidArgumentError(
            f"channel count mismatch: {acts.shape[0]} maps vs {len(weights)} weights"
        )
    w = np.array([cw.weight for cw in weights], dtype=np.float32)
    return acts * w[:, None, None]


def select_top_p(maps: np.ndarray, weights: list[ChannelWeight], p: int) -> SelectedStack:
    """Keep the p channels with the largest weights, in descending order.

    Ties break toward the lower channel index. p larger than the channel
    count clamps to it with a warning.
    """
    maps = as_stack(maps, "maps")
    k = maps.shape[0]
    if len(weights) != k:
        raise InvalidArgumentError(
            f"channel count mismatch: {k} maps vs {len(weights)} weights"
        )
    if p < 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    if p > k:
        log.warning("requested top-%d channels but only %d available; clamping", p, k)
        p = k
    order = sorted(range(k), key=lambda i: (-weights[i].weight, i))[:p]
    rows = maps.reshape(k, -1)[order].astype(np.float32)
    return SelectedStack(rows=rows, source_channels=list(order), spatial_shape=maps.shape[1:])


def svd_decompose(sel: SelectedStack, q: int) -> Decomposition:
    """Project the selected stack onto its top-q left singular directions.

    The SVD runs on the Gram matrix (P x P) when P <= M*N, otherwise on
    the stack directly; either way in float64. Each component row is
    sign-canonicalized so its entry sum is >= 0, and q is clamped to the
    numerical rank (trailing singular values below tolerance dropped).
    """
    rows = np.asarray(sel.rows, dtype=np.float64)
    p, n = rows.shape
    if q < 1:
        raise InvalidArgumentError(f"q must be >= 1, got {q}")
    if q > min(p, n):
        log.warning("requested %d components but at most %d exist; clamping", q, min(p, n))
        q = min(p, n)

    try:
        if p <= n:
            gram = rows @ rows.T
            eigvals, eigvecs = np.linalg.eigh(gram)
            order = np.argsort(eigvals)[::-1]
            sigma = np.sqrt(np.maximum(eigvals[order], 0.0))
            u = eigvecs[:, order]
        else:
            u, sigma, _ = np.linalg.svd(rows, full_matrices=False)
    except np.linalg.LinAlgError as e:
        cond = float(np.linalg.norm(rows)) if rows.size else 0.0
        raise ComputationFailedError(
            f"SVD failed on a {p}x{n} stack (frobenius norm {cond:.3e}): {e}"
        ) from e

    rank = int(np.sum(sigma > RANK_TOLERANCE * sigma[0])) if sigma[0] > 0 else 0
    if rank == 0:
        # All-zero evidence: keep a single zero component so downstream
        # stages still receive one (uninformative) map.
        log.warning("selected stack is numerically zero; emitting one zero component")
        comp = np.zeros((1,) + tuple(sel.spatial_shape), dtype=np.float32)
        return Decomposition(
            singular_values=np.zeros(1),
            components=comp,
            left_vectors=np.zeros((1, p)),
        )
    if q > rank:
        log.warning("clamping q from %d to numerical rank %d", q, rank)
        q = rank

    uq = u[:, :q].T  # (q, P)
    fhat = uq @ rows  # (q, M*N), row i has L2 norm sigma_i
    flips = np.where(fhat.sum(axis=1) < 0.0, -1.0, 1.0)
    fhat *= flips[:, None]
    uq = uq * flips[:, None]

    m, n_sp = sel.spatial_shape
    return Decomposition(
        singular_values=sigma[:q].copy(),
        components=fhat.reshape(q, m, n_sp).astype(np.float32),
        left_vectors=uq,
    )


def build_ossms(dec: Decomposition, out_h: int, out_w: int) -> OssmSet:
    """Upsample each component to (out_h, out_w), then min-max normalize.

    The composition order is normalize-after-upsample; weights start
    uniform and are overwritten by the integration stage.
    """
    q = dec.components.shape[0]
    if q == 0:
        raise InvalidArgumentError("decomposition has no components")
    maps = np.empty((q, out_h, out_w), dtype=np.float32)
    for i in range(q):
        maps[i] = minmax_normalize(bilinear_upsample(dec.components[i], out_h, out_w))
    return OssmSet(maps=maps, singular_values=dec.singular_values.copy())
