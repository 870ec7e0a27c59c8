"""Model abstraction: Scorer / ActivationProbe contracts and a toy CNN.

The toy network is a single strided valid convolution, ReLU, global
average pooling and a per-concept linear head:

    score(img, c) = <v_c, GAP(ReLU(conv(img)))>

One conv layer is enough to exercise every pipeline stage while keeping
the backward pass hand-derivable: the gradient of the score with respect
to the pre-ReLU response of channel k is v_c[k] / (M*N) wherever the
channel is active and 0 elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import InvalidArgumentError
from .tensorops import as_image


@runtime_checkable
class Scorer(Protocol):
    """Maps an image to a scalar score for a named concept."""

    concurrency_safe: bool

    def score(self, img: np.ndarray, concept: str) -> float: ...


@runtime_checkable
class ActivationProbe(Protocol):
    """Supplies activations, gradients and the score at the target layer."""

    def probe(self, img: np.ndarray, concept: str) -> tuple[np.ndarray, np.ndarray, float]: ...


def _im2col(img: np.ndarray, kernel: int, stride: int) -> tuple[np.ndarray, int, int]:
    """Extract valid conv patches as rows of shape (M*N, 3*kernel*kernel)."""
    c, h, w = img.shape
    m = (h - kernel) // stride + 1
    n = (w - kernel) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(img, (kernel, kernel), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (3, m, n, k, k)
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(m * n, c * kernel * kernel)
    return cols, m, n


@dataclass
class ToyCnn:
    """Single-conv differentiable network with per-concept linear heads."""

    conv_weights: np.ndarray  # (C_out, 3, k, k) float32
    conv_bias: np.ndarray  # (C_out,) float32
    class_vectors: dict[str, np.ndarray]  # concept -> (C_out,) float32
    stride: int = 1
    concurrency_safe: bool = True

    @property
    def kernel_size(self) -> int:
        return int(self.conv_weights.shape[2])

    @property
    def channels(self) -> int:
        return int(self.conv_weights.shape[0])

    @classmethod
    def seeded(
        cls,
        seed: int,
        channels: int = 16,
        kernel: int = 8,
        stride: int = 8,
        concepts: int = 3,
    ) -> "ToyCnn":
        """Random, deterministic instance for tests and demos."""
        rng = np.random.default_rng(seed)
        fan_in = 3 * kernel * kernel
        w = rng.standard_normal((channels, 3, kernel, kernel)) / np.sqrt(fan_in)
        b = rng.standard_normal(channels) * 0.01
        vectors = {
            f"concept-{i}": rng.standard_normal(channels).astype(np.float32)
            for i in range(concepts)
        }
        return cls(
            conv_weights=w.astype(np.float32),
            conv_bias=b.astype(np.float32),
            class_vectors=vectors,
            stride=stride,
        )

    def _class_vector(self, concept: str) -> np.ndarray:
        try:
            return self.class_vectors[concept]
        except KeyError:
            known = ", ".join(sorted(self.class_vectors))
            raise InvalidArgumentError(f"unknown concept {concept!r} (known: {known})") from None

    def _conv(self, img: np.ndarray) -> tuple[np.ndarray, int, int]:
        """Pre-ReLU responses (C_out, M, N) in model precision (float32)."""
        img = as_image(img)
        k = self.kernel_size
        if img.shape[1] < k or img.shape[2] < k:
            raise InvalidArgumentError(
                f"image {img.shape[1]}x{img.shape[2]} smaller than kernel {k}x{k}"
            )
        cols, m, n = _im2col(np.ascontiguousarray(img), k, self.stride)
        flat_w = self.conv_weights.reshape(self.channels, -1)
        z = cols @ flat_w.T + self.conv_bias
        return z.T.reshape(self.channels, m, n), m, n

    def forward(self, img: np.ndarray, concept: str) -> tuple[float, np.ndarray]:
        """Concept score and post-ReLU activation stack."""
        v = self._class_vector(concept)
        z, _, _ = self._conv(img)
        acts = np.maximum(z, np.float32(0.0))
        gap = acts.mean(axis=(1, 2), dtype=np.float64)
        score = float(v.astype(np.float64) @ gap)
        return score, acts

    def backward(self, img: np.ndarray, concept: str) -> np.ndarray:
        """Analytic gradient of the score w.r.t. each conv response.

        Chain rule through GAP and the linear head gives v_c[k]/(M*N) at
        every active site; the ReLU zeroes the rest.
        """
        v = self._class_vector(concept)
        z, m, n = self._conv(img)
        mask = (z > 0.0).astype(np.float32)
        per_channel = (v.astype(np.float64) / (m * n)).astype(np.float32)
        return mask * per_channel[:, None, None]

    def score(self, img: np.ndarray, concept: str) -> float:
        return self.forward(img, concept)[0]

    def probe(self, img: np.ndarray, concept: str) -> tuple[np.ndarray, np.ndarray, float]:
        score, acts = self.forward(img, concept)
        grads = self.backward(img, concept)
        return acts, grads, score


class CountingScorer:
    """Wrapper that counts score() invocations; used by tests and sidecars."""

    def __init__(self, inner: Scorer):
        self.inner = inner
        self.calls = 0
        self.concurrency_safe = False  # serialization keeps the count exact

    def score(self, img: np.ndarray, concept: str) -> float:
        self.calls += 1
        return self.inner.score(img, concept)
