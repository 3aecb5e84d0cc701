"""Correspondence accuracy metrics.

PCK at a pixel threshold of alpha * max(h, w), per-point and per-image
aggregation, azimuth sensitivity, and the correct/jitter/miss/swap error
breakdown with left/right confusions reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .geoware import KeypointSet, SubgroupSchema
from .tensor import ImagePoint, InstanceMask

BREAKDOWN_CLASSES = ("correct", "jitter", "miss", "swap")


@dataclass(frozen=True)
class PckConfig:
    alpha: float
    reference: str = "bbox"

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if self.reference not in ("bbox", "image"):
            raise InputError(f"unknown reference {self.reference!r}")


@dataclass(frozen=True)
class PckResult:
    correct: np.ndarray
    threshold: float

    @property
    def score(self) -> float:
        return float(np.mean(self.correct)) if self.correct.size else 0.0


def _as_points(preds: Sequence[ImagePoint] | np.ndarray) -> np.ndarray:
    if isinstance(preds, np.ndarray):
        pts = np.asarray(preds, dtype=np.float64)
    else:
        pts = np.asarray([(p.x, p.y) for p in preds], dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InputError("predictions must be (n, 2) points")
    return pts


def pck_threshold(gts: KeypointSet, cfg: PckConfig) -> float:
    """Pixel distance threshold alpha * max(h, w) of the configured reference."""
    if cfg.reference == "bbox":
        if gts.bbox is None:
            raise InputError("reference=bbox but the annotation has no bbox")
        _, _, w, h = gts.bbox
    else:
        w, h = gts.image_size
    return cfg.alpha * max(h, w)


def pck(preds: Sequence[ImagePoint] | np.ndarray, gts: KeypointSet, cfg: PckConfig,
        indices: Sequence[int] | None = None) -> PckResult:
    """Per-point correctness under the inclusive threshold.

    preds is aligned index-wise with `indices` (default: the visible
    keypoints of gts, in ascending index order).
    """
    pts = _as_points(preds)
    if indices is None:
        indices = [int(i) for i in np.nonzero(gts.visibility)[0]]
    if len(indices) != pts.shape[0]:
        raise InputError(f"{pts.shape[0]} predictions for {len(indices)} keypoints")
    thr = pck_threshold(gts, cfg)
    gt = gts.xy[list(indices)]
    dist = np.linalg.norm(pts - gt, axis=1)
    return PckResult(correct=dist <= thr, threshold=thr)


def aggregate(results: Sequence[PckResult], grouping: str = "per_point") -> float:
    """per_point pools all keypoints; per_image averages per-image fractions."""
    if not results:
        raise InputError("no results to aggregate")
    if grouping == "per_point":
        total = sum(int(r.correct.size) for r in results)
        if total == 0:
            raise InputError("no evaluated keypoints")
        return sum(int(np.count_nonzero(r.correct)) for r in results) / total
    if grouping == "per_image":
        return float(np.mean([r.score for r in results]))
    raise InputError(f"unknown grouping {grouping!r}")


def azimuth_sensitivity(scores: Mapping[int, float]) -> float:
    """Normalized relative difference (max - min) / max over azimuth bins.

    Bins absent from the mapping had no pairs and are excluded.
    """
    vals = [float(v) for v in scores.values()]
    if not vals:
        raise InputError("no azimuth bins with pairs")
    top = max(vals)
    if top == 0.0:
        raise InputError("undefined sensitivity: all azimuth-bin scores are zero")
    return (top - min(vals)) / top


def _inside_foreground(x: float, y: float, gts: KeypointSet,
                       fg_mask: InstanceMask | None) -> bool:
    w, h = gts.image_size
    if fg_mask is not None:
        mh, mw = fg_mask.bits.shape
        if (mh, mw) != (h, w):
            raise InputError(f"foreground mask {mw}x{mh} does not match image {w}x{h}")
        ix = min(max(int(np.floor(x + 0.5)), 0), mw - 1)
        iy = min(max(int(np.floor(y + 0.5)), 0), mh - 1)
        return bool(fg_mask.bits[iy, ix])
    if gts.bbox is None:
        raise InputError("breakdown needs a foreground mask or a bbox")
    bx, by, bw, bh = gts.bbox
    return bx <= x <= bx + bw and by <= y <= by + bh


@dataclass(frozen=True)
class Breakdown:
    """Mutually exclusive per-keypoint classification plus fraction summary.

    labels holds one of BREAKDOWN_CLASSES per evaluated keypoint; swap_lr
    flags the subset of swaps landing on a same-subgroup keypoint.
    """

    labels: tuple[str, ...]
    swap_lr_flags: tuple[bool, ...]

    def fractions(self) -> dict[str, float]:
        n = len(self.labels)
        if n == 0:
            raise InputError("empty breakdown")
        out = {c: self.labels.count(c) / n for c in BREAKDOWN_CLASSES}
        out["swap_lr"] = sum(self.swap_lr_flags) / n
        return out


def classify_prediction(pred: ImagePoint, kp: int, gts: KeypointSet,
                        schema: SubgroupSchema, cfg: PckConfig,
                        fg_mask: InstanceMask | None = None) -> tuple[str, bool]:
    """Classify one prediction as correct/jitter/miss/swap (+ swap_lr flag).

    swap means the nearest visible annotated keypoint to the prediction is
    not the GT one; ties in that distance keep the GT (so they count as
    jitter, never swap).
    """
    if not gts.visibility[kp]:
        raise InputError(f"keypoint {kp} is not visible in the target annotation")
    thr = pck_threshold(gts, cfg)
    gt = gts.xy[kp]
    if float(np.hypot(pred.x - gt[0], pred.y - gt[1])) <= thr:
        return "correct", False
    if not _inside_foreground(pred.x, pred.y, gts, fg_mask):
        return "miss", False
    vis = np.nonzero(gts.visibility)[0]
    d = np.linalg.norm(gts.xy[vis] - np.array([pred.x, pred.y]), axis=1)
    d_gt = d[list(vis).index(kp)]
    nearer = vis[d < d_gt]
    if nearer.size == 0:
        return "jitter", False
    nearest = int(vis[int(np.argmin(d))])
    g_gt = schema.subgroup_of(kp)
    lr = g_gt is not None and schema.subgroup_of(nearest) == g_gt
    return "swap", lr


def breakdown(preds: Sequence[ImagePoint] | np.ndarray, gts: KeypointSet,
              schema: SubgroupSchema, cfg: PckConfig,
              indices: Sequence[int] | None = None,
              fg_mask: InstanceMask | None = None) -> Breakdown:
    pts = _as_points(preds)
    if indices is None:
        indices = [int(i) for i in np.nonzero(gts.visibility)[0]]
    if len(indices) != pts.shape[0]:
        raise InputError(f"{pts.shape[0]} predictions for {len(indices)} keypoints")
    labels = []
    flags = []
    for (x, y), kp in zip(pts, indices):
        lab, lr = classify_prediction(ImagePoint(float(x), float(y)), kp, gts,
                                      schema, cfg, fg_mask)
        labels.append(lab)
        flags.append(lr)
    return Breakdown(labels=tuple(labels), swap_lr_flags=tuple(flags))


@dataclass(frozen=True)
class EvalReport:
    """Aggregated evaluation summary ready for JSON serialization."""

    pck: dict[str, dict[str, float]]
    geo_pck: dict[str, float] = field(default_factory=dict)
    standard_pck: dict[str, float] = field(default_factory=dict)
    breakdown_fractions: dict[str, float] = field(default_factory=dict)
    azimuth_sensitivity: dict[str, float] = field(default_factory=dict)
    n_pairs: int = 0
    n_keypoints: int = 0

    def __post_init__(self) -> None:
        if self.breakdown_fractions:
            total = sum(self.breakdown_fractions[c] for c in BREAKDOWN_CLASSES)
            if abs(total - 1.0) > 1e-9:
                raise InputError(f"breakdown fractions sum to {total}, not 1")

    def to_dict(self) -> dict:
        return {
            "pck": self.pck,
            "geo_pck": self.geo_pck,
            "standard_pck": self.standard_pck,
            "breakdown": self.breakdown_fractions,
            "azimuth_sensitivity": self.azimuth_sensitivity,
            "n_pairs": self.n_pairs,
            "n_keypoints": self.n_keypoints,
        }
