"""Similarity maps and the four inference operators, plus dense NN matching.

All operators are pure functions on small grids (<= 60x60); nearest-neighbor
search is exhaustive by design.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .tensor import FeatureMap, GridPoint, sample_descriptor

MODES = ("argmax", "soft", "window", "kernel")


@dataclass(frozen=True)
class SimilarityMap:
    """H x W grid of cosine similarities for one query descriptor."""

    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise InputError(f"similarity map must be (H, W), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InputError("similarity map contains non-finite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class InferenceConfig:
    """Inference operator selection.

    window_size counts cells per side (a k x k window); temperature scales the
    softmax over cosine similarities. Defaults follow the supervised setting
    (window 15); zero-shot uses window 11.
    """

    mode: str = "window"
    window_size: int = 15
    temperature: float = 0.04
    kernel_sigma: float = 2.5

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise InputError(f"window_size must be odd and >= 1, got {self.window_size}")
        if not self.temperature > 0:
            raise InputError(f"temperature must be > 0, got {self.temperature}")
        if not self.kernel_sigma > 0:
            raise InputError(f"kernel_sigma must be > 0, got {self.kernel_sigma}")


def similarity_map(query: np.ndarray, target: FeatureMap) -> SimilarityMap:
    """Dot product of one query descriptor against every target cell."""
    query = np.asarray(query)
    if query.ndim != 1 or query.shape[0] != target.channels:
        raise InputError(
            f"query has {query.shape} channels, target expects ({target.channels},)")
    return SimilarityMap(target.data.astype(np.float64) @ query.astype(np.float64))


def hard_argmax(s: SimilarityMap) -> GridPoint:
    """Integer coordinates of the maximum; ties break to the lowest
    row-major index for cross-platform determinism."""
    flat = int(np.argmax(s.values))
    y, x = divmod(flat, s.width)
    return GridPoint(float(x), float(y))


def _softmax_expectation(values: np.ndarray, temperature: float,
                         xs: np.ndarray, ys: np.ndarray) -> GridPoint:
    z = values.astype(np.float64) / temperature
    z -= z.max()
    w = np.exp(z)
    w /= w.sum()
    return GridPoint(float((w * xs).sum()), float((w * ys).sum()))


def soft_argmax(s: SimilarityMap, temperature: float) -> GridPoint:
    """Softmax-weighted expectation of cell-center coordinates."""
    if not temperature > 0:
        raise InputError(f"temperature must be > 0, got {temperature}")
    ys, xs = np.mgrid[0:s.height, 0:s.width].astype(np.float64)
    return _softmax_expectation(s.values, temperature, xs, ys)


def window_soft_argmax(s: SimilarityMap, window_size: int, temperature: float) -> GridPoint:
    """Soft argmax restricted to a window anchored at the hard argmax.

    The window is clipped at map borders without re-centering, so the
    effective window may be asymmetric near edges. window_size=1 degenerates
    to hard argmax; a window covering the whole map equals global soft argmax.
    """
    if window_size < 1 or window_size % 2 == 0:
        raise InputError(f"window_size must be odd and >= 1, got {window_size}")
    if not temperature > 0:
        raise InputError(f"temperature must be > 0, got {temperature}")
    center = hard_argmax(s)
    cx, cy = int(center.x), int(center.y)
    half = window_size // 2
    x0, x1 = max(cx - half, 0), min(cx + half, s.width - 1)
    y0, y1 = max(cy - half, 0), min(cy + half, s.height - 1)
    sub = s.values[y0:y1 + 1, x0:x1 + 1]
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1].astype(np.float64)
    return _softmax_expectation(sub, temperature, xs, ys)


def kernel_soft_argmax(s: SimilarityMap, sigma: float, temperature: float) -> GridPoint:
    """Global soft argmax after multiplying the map by a Gaussian centered
    at the hard argmax position."""
    if not sigma > 0:
        raise InputError(f"sigma must be > 0, got {sigma}")
    if not temperature > 0:
        raise InputError(f"temperature must be > 0, got {temperature}")
    center = hard_argmax(s)
    ys, xs = np.mgrid[0:s.height, 0:s.width].astype(np.float64)
    kernel = np.exp(-((xs - center.x) ** 2 + (ys - center.y) ** 2) / (2.0 * sigma * sigma))
    return _softmax_expectation(s.values.astype(np.float64) * kernel, temperature, xs, ys)


def apply_operator(s: SimilarityMap, cfg: InferenceConfig) -> GridPoint:
    if cfg.mode == "argmax":
        return hard_argmax(s)
    if cfg.mode == "soft":
        return soft_argmax(s, cfg.temperature)
    if cfg.mode == "window":
        return window_soft_argmax(s, cfg.window_size, cfg.temperature)
    return kernel_soft_argmax(s, cfg.kernel_sigma, cfg.temperature)


def _flat_cosine(src: FeatureMap, tgt: FeatureMap) -> np.ndarray:
    if src.channels != tgt.channels:
        raise InputError(
            f"channel mismatch: source {src.channels} vs target {tgt.channels}")
    a = src.data.reshape(-1, src.channels).astype(np.float64)
    b = tgt.data.reshape(-1, tgt.channels).astype(np.float64)
    return a @ b.T


def nn_field(src: FeatureMap, tgt: FeatureMap) -> tuple[np.ndarray, np.ndarray]:
    """Per source cell: flat row-major index of the max-cosine target cell
    plus the exact L2 feature distance to it.

    Distances are computed as difference norms of the selected pair (not via
    sqrt(2-2cos)) so that an identical descriptor yields exactly 0.0.
    """
    cos = _flat_cosine(src, tgt)
    idx = np.argmax(cos, axis=1)
    a = src.data.reshape(-1, src.channels).astype(np.float64)
    b = tgt.data.reshape(-1, tgt.channels).astype(np.float64)
    diff = a - b[idx]
    dist = np.sqrt(np.einsum("nc,nc->n", diff, diff))
    h, w = src.height, src.width
    return idx.reshape(h, w), dist.reshape(h, w)


def mutual_nn_pairs(src: FeatureMap, tgt: FeatureMap) -> set[tuple[int, int]]:
    """Flat-index pairs where each cell is the other's nearest neighbor."""
    cos = _flat_cosine(src, tgt)
    nn12 = np.argmax(cos, axis=1)
    nn21 = np.argmax(cos, axis=0)
    ids = np.arange(cos.shape[0])
    mutual = nn21[nn12] == ids
    return {(int(i), int(nn12[i])) for i in ids[mutual]}


def match_keypoints(src: FeatureMap, tgt: FeatureMap, kps: Sequence[GridPoint],
                    cfg: InferenceConfig, sampling: str = "bilinear") -> list[GridPoint]:
    """Match each source keypoint into the target grid with the configured
    operator. Deterministic and order-independent over keypoints."""
    if src.channels != tgt.channels:
        raise InputError(
            f"channel mismatch: source {src.channels} vs target {tgt.channels}")
    out = []
    for p in kps:
        query = sample_descriptor(src, p, method=sampling)
        out.append(apply_operator(similarity_map(query, tgt), cfg))
    return out
