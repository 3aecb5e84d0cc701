"""Instance matching distance, template-vote pose prediction, and test-time
adaptive pose alignment.

The matching distance sums, over masked source cells, the L2 feature distance
to each cell's nearest neighbor (by cosine) in the target map. The literal
sum is kept for pose prediction fidelity; alignment defaults to the
mean-normalized variant so scores stay comparable when rotated variants of
non-square grids change the mask size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .matcher import _flat_cosine, mutual_nn_pairs
from .tensor import FeatureMap, InstanceMask

METRICS = ("imd", "mutual_nn")


@dataclass(frozen=True)
class PoseVariant:
    """One viewpoint-augmented copy of the source: its features and, when
    available, its instance mask transformed alongside."""

    label: str
    features: FeatureMap
    mask: InstanceMask | None = None

    def __post_init__(self) -> None:
        if self.mask is not None and (
                self.mask.height != self.features.height
                or self.mask.width != self.features.width):
            raise InputError(
                f"variant {self.label!r}: mask {self.mask.height}x{self.mask.width} "
                f"does not match grid {self.features.height}x{self.features.width}")


@dataclass(frozen=True)
class TemplateSet:
    """One set of pose templates: label -> (features, mask-for-query is not
    stored here; the query mask restricts the sum)."""

    templates: Mapping[str, FeatureMap]

    def __post_init__(self) -> None:
        if len(self.templates) < 2:
            raise InputError("template set needs >= 2 labels")
        chans = {f.channels for f in self.templates.values()}
        if len(chans) != 1:
            raise InputError(f"inconsistent template channel counts {sorted(chans)}")


@dataclass(frozen=True)
class PosePrediction:
    label: str
    votes: dict[str, int] = field(default_factory=dict)
    per_set_scores: list[dict[str, float]] = field(default_factory=list)


@dataclass(frozen=True)
class AlignResult:
    label: str
    scores: dict[str, float] = field(default_factory=dict)


def imd(src: FeatureMap, tgt: FeatureMap, mask: InstanceMask,
        reduction: str = "sum") -> float:
    """Instance matching distance over masked source cells.

    For each masked cell, find the target cell with maximal cosine similarity
    and take the exact L2 norm of the descriptor difference; reduce by sum
    (default) or mean.
    """
    if reduction not in ("sum", "mean"):
        raise InputError(f"reduction must be sum|mean, got {reduction!r}")
    if mask.height != src.height or mask.width != src.width:
        raise InputError("mask dimensions do not match the source grid")
    flat_mask = mask.bits.reshape(-1)
    if not flat_mask.any():
        raise InputError("empty instance mask")
    a = src.data.reshape(-1, src.channels).astype(np.float64)[flat_mask]
    b = tgt.data.reshape(-1, tgt.channels).astype(np.float64)
    if src.channels != tgt.channels:
        raise InputError(
            f"channel mismatch: source {src.channels} vs target {tgt.channels}")
    idx = np.argmax(a @ b.T, axis=1)
    diff = a - b[idx]
    dists = np.sqrt(np.einsum("nc,nc->n", diff, diff))
    return float(dists.mean()) if reduction == "mean" else float(dists.sum())


def mutual_nn_distance(src: FeatureMap, tgt: FeatureMap) -> float:
    """Mean L2 feature distance over mutual nearest-neighbor cell pairs;
    +inf sentinel when no mutual pair exists."""
    pairs = mutual_nn_pairs(src, tgt)
    if not pairs:
        return math.inf
    a = src.data.reshape(-1, src.channels).astype(np.float64)
    b = tgt.data.reshape(-1, tgt.channels).astype(np.float64)
    total = 0.0
    for i, j in pairs:
        diff = a[i] - b[j]
        total += math.sqrt(float(np.dot(diff, diff)))
    return total / len(pairs)


def predict_pose(query: FeatureMap, query_mask: InstanceMask,
                 sets: Sequence[TemplateSet]) -> PosePrediction:
    """Per template set, pick the label minimizing the (sum) matching
    distance from the query; the final label is the plurality vote across
    sets. Vote ties break by smallest total distance, then label order."""
    if not sets:
        raise InputError("need at least one template set")
    votes: dict[str, int] = {}
    totals: dict[str, float] = {}
    per_set: list[dict[str, float]] = []
    for ts in sets:
        scores = {label: imd(query, tmpl, query_mask, reduction="sum")
                  for label, tmpl in ts.templates.items()}
        per_set.append(scores)
        best = min(scores, key=lambda k: (scores[k], k))
        votes[best] = votes.get(best, 0) + 1
        for label, s in scores.items():
            totals[label] = totals.get(label, 0.0) + s
    winner = min(votes, key=lambda k: (-votes[k], totals.get(k, math.inf), k))
    return PosePrediction(winner, votes=votes, per_set_scores=per_set)


def adaptive_align(variants: Sequence[PoseVariant], tgt: FeatureMap,
                   metric: str = "imd") -> AlignResult:
    """Score every source variant against the target and return the argmin.

    The identity variant must be present and listed first; ties prefer the
    earlier variant, so an uninformative score table falls back to identity.
    Keypoints matched afterwards must be carried through the chosen variant's
    coordinate transform (tensor.transform_grid_point / its inverse).
    """
    if not variants:
        raise InputError("need at least one pose variant")
    if variants[0].label != "identity":
        raise InputError("identity variant must be listed first")
    if metric not in METRICS:
        raise InputError(f"metric must be one of {METRICS}, got {metric!r}")
    scores: dict[str, float] = {}
    best_label = variants[0].label
    best_score = math.inf
    for v in variants:
        if metric == "imd":
            if v.mask is None:
                raise InputError(f"variant {v.label!r} has no mask; imd metric needs one")
            score = imd(v.features, tgt, v.mask, reduction="mean")
        else:
            score = mutual_nn_distance(v.features, tgt)
        scores[v.label] = score
        if score < best_score:
            best_score = score
            best_label = v.label
    return AlignResult(best_label, scores=scores)
