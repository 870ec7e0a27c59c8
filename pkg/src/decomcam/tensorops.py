"""Dense map/image primitives shared by every stage of the pipeline.

Conventions:
  - a "map" is a 2-D float32 array (H, W)
  - an "image" is a 3-D float32 array (3, H, W), channel-major
  - a "stack" is a 3-D float32 array (K, M, N) of K same-shaped maps

All operations are pure. Elementwise arithmetic stays in float32;
reductions (sums, dot products) accumulate in float64.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InvalidArgumentError


def as_map2(data, name: str = "map") -> np.ndarray:
    """Validate and coerce a 2-D map to float32."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidArgumentError(f"{name} must be a nonempty 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidArgumentError(f"{name} contains NaN or Inf")
    return arr


def as_image(data, name: str = "image") -> np.ndarray:
    """Validate and coerce a channel-major RGB image to float32."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] != 3 or arr.shape[1] == 0 or arr.shape[2] == 0:
        raise InvalidArgumentError(f"{name} must have shape (3, H, W), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidArgumentError(f"{name} contains NaN or Inf")
    return arr


def as_stack(data, name: str = "stack") -> np.ndarray:
    """Validate and coerce a channel stack to float32 (K, M, N)."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] == 0 or arr.shape[1] == 0 or arr.shape[2] == 0:
        raise InvalidArgumentError(f"{name} must have shape (K, M, N) with K>=1, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidArgumentError(f"{name} contains NaN or Inf")
    return arr


def minmax_normalize(m: np.ndarray) -> np.ndarray:
    """Affine-rescale a map into [0, 1].

    The minimum maps to 0 and the maximum to 1. A constant map carries no
    localization signal and is mapped to all zeros; "constant" includes a
    range that is pure floating-point fuzz relative to the magnitude, so
    rounding noise is never amplified into a fake signal.
    """
    m = as_map2(m)
    lo = float(m.min())
    hi = float(m.max())
    if hi - lo <= 1e-12 * max(abs(hi), abs(lo)):
        return np.zeros_like(m)
    return ((m - lo) / (hi - lo)).astype(np.float32)


def bilinear_upsample(m: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a map to (out_h, out_w) with bilinear interpolation.

    Uses the align-corners convention: corner pixels of the input map
    exactly onto corner pixels of the output. Output values stay within
    [min(m), max(m)].
    """
    m = as_map2(m)
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError(f"output shape must be >= 1x1, got {out_h}x{out_w}")
    in_h, in_w = m.shape

    def grid(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n_out == 1 or n_in == 1:
            src = np.zeros(n_out, dtype=np.float64)
        else:
            src = np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)
        i0 = np.clip(np.floor(src).astype(np.intp), 0, n_in - 1)
        i1 = np.minimum(i0 + 1, n_in - 1)
        frac = (src - i0).astype(np.float32)
        return i0, i1, frac

    r0, r1, fr = grid(out_h, in_h)
    c0, c1, fc = grid(out_w, in_w)

    # difference form: exact for constant neighborhoods
    top = m[r0][:, c0] + fc * (m[r0][:, c1] - m[r0][:, c0])
    bot = m[r1][:, c0] + fc * (m[r1][:, c1] - m[r1][:, c0])
    out = top + fr[:, None] * (bot - top)
    return out.astype(np.float32)


def gaussian_kernel1d(sigma: float, kernel_size: int) -> np.ndarray:
    """Normalized 1-D Gaussian kernel of odd length."""
    if sigma <= 0:
        raise InvalidArgumentError(f"sigma must be > 0, got {sigma}")
    if kernel_size < 3 or kernel_size % 2 == 0:
        raise InvalidArgumentError(f"kernel_size must be odd and >= 3, got {kernel_size}")
    radius = kernel_size // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    k /= k.sum()
    return k.astype(np.float32)


def gaussian_blur(img: np.ndarray, sigma: float, kernel_size: int) -> np.ndarray:
    """Separable Gaussian blur per channel with reflect padding."""
    img = as_image(img)
    k = gaussian_kernel1d(sigma, kernel_size)
    out = correlate1d(img, k, axis=1, mode="reflect")
    out = correlate1d(out, k, axis=2, mode="reflect")
    return out.astype(np.float32)


def blur_map(m: np.ndarray, sigma: float, kernel_size: int) -> np.ndarray:
    """Separable Gaussian blur of a single 2-D map, reflect padding."""
    m = as_map2(m)
    k = gaussian_kernel1d(sigma, kernel_size)
    out = correlate1d(m, k, axis=0, mode="reflect")
    out = correlate1d(out, k, axis=1, mode="reflect")
    return out.astype(np.float32)


def softmax(v: np.ndarray) -> np.ndarray:
    """Shift-invariant softmax (max subtraction, float64 accumulation)."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgumentError(f"softmax expects a nonempty 1-D vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidArgumentError("softmax input contains NaN or Inf")
    shifted = arr - arr.max()
    e = np.exp(shifted)
    return (e / e.sum()).astype(np.float32)
