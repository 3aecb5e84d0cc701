"""Pose-variant pair augmentation and channel dropout.

Flip variants pair features of flipped IMAGES (read from the precomputed
flipped-feature files) with x-mirrored, index-remapped keypoints. Mirroring
a feature tensor is not the same thing as extracting features from the
mirrored image, so the flipped maps must be supplied, never synthesized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..tensor import FeatureMap


@dataclass(frozen=True)
class PairBatch:
    """One training pair: raw feature maps plus full keypoint annotations.

    Keypoints are continuous grid coordinates aligned index-wise between the
    two images; visibility masks select the usable subset. The *_flipped
    maps hold features extracted from the horizontally flipped images and
    are required only when flip augmentation is on.
    """

    source: FeatureMap
    target: FeatureMap
    kps_source: np.ndarray
    kps_target: np.ndarray
    vis_source: np.ndarray
    vis_target: np.ndarray
    flip_map: tuple[int, ...]
    source_flipped: FeatureMap | None = None
    target_flipped: FeatureMap | None = None
    src_id: str = ""
    tgt_id: str = ""

    def __post_init__(self) -> None:
        ks = np.asarray(self.kps_source, dtype=np.float64)
        kt = np.asarray(self.kps_target, dtype=np.float64)
        vs = np.asarray(self.vis_source, dtype=np.bool_)
        vt = np.asarray(self.vis_target, dtype=np.bool_)
        k = len(self.flip_map)
        if ks.shape != (k, 2) or kt.shape != (k, 2) or vs.shape != (k,) or vt.shape != (k,):
            raise InputError("keypoint arrays must match flip_map length")
        if sorted(self.flip_map) != list(range(k)):
            raise InputError("flip_map is not a permutation")
        if any(self.flip_map[self.flip_map[i]] != i for i in range(k)):
            raise InputError("flip_map is not an involution")
        for arr in (ks, kt, vs, vt):
            arr.setflags(write=False)
        object.__setattr__(self, "kps_source", ks)
        object.__setattr__(self, "kps_target", kt)
        object.__setattr__(self, "vis_source", vs)
        object.__setattr__(self, "vis_target", vt)

    def mutual_indices(self) -> np.ndarray:
        return np.nonzero(self.vis_source & self.vis_target)[0]


@dataclass(frozen=True)
class TrainingVariant:
    """One augmentation variant ready for the loss functions."""

    label: str
    weight: float
    source: FeatureMap
    target: FeatureMap
    kps_source: np.ndarray
    kps_target: np.ndarray


def _mirror_x(kps: np.ndarray, grid_w: int) -> np.ndarray:
    out = kps.copy()
    out[:, 0] = (grid_w - 1) - out[:, 0]
    return out


def augment_pair(batch: PairBatch,
                 weights: dict[str, float] | None = None) -> list[TrainingVariant]:
    """Expand one pair into original, double-flip, single-flip and self-flip
    variants with loss weights {1, 1, 1, 0.25} by default.

    Variants with weight 0 are dropped. Index remapping: in a flipped image
    the part at the mirrored location is the flip partner (left paw becomes
    right paw), so single-flip pairs keypoint j of the target with the
    mirror of keypoint flip_map[j] of the source, and self-flip pairs each
    keypoint with its partner's mirror in the same image.
    """
    w = {"original": 1.0, "double": 1.0, "single": 1.0, "self": 0.25}
    if weights:
        w.update(weights)
    fm = np.asarray(batch.flip_map, dtype=np.int64)
    gw_s = batch.source.width
    gw_t = batch.target.width
    out: list[TrainingVariant] = []

    def need_flipped(which: str) -> FeatureMap:
        f = batch.source_flipped if which == "source" else batch.target_flipped
        if f is None:
            ident = batch.src_id if which == "source" else batch.tgt_id
            raise InputError(f"missing flipped features for {which} image {ident!r}")
        return f

    mut = batch.mutual_indices()
    if w["original"] > 0 and mut.size:
        out.append(TrainingVariant(
            "original", w["original"], batch.source, batch.target,
            batch.kps_source[mut], batch.kps_target[mut]))

    if w["double"] > 0 and mut.size:
        out.append(TrainingVariant(
            "double", w["double"], need_flipped("source"), need_flipped("target"),
            _mirror_x(batch.kps_source[mut], gw_s),
            _mirror_x(batch.kps_target[mut], gw_t)))

    if w["single"] > 0:
        idx = np.nonzero(batch.vis_source[fm] & batch.vis_target)[0]
        if idx.size:
            out.append(TrainingVariant(
                "single", w["single"], need_flipped("source"), batch.target,
                _mirror_x(batch.kps_source[fm[idx]], gw_s),
                batch.kps_target[idx]))

    if w["self"] > 0:
        idx = np.nonzero(batch.vis_source & batch.vis_source[fm])[0]
        if idx.size:
            out.append(TrainingVariant(
                "self", w["self"], batch.source, need_flipped("source"),
                batch.kps_source[idx],
                _mirror_x(batch.kps_source[fm[idx]], gw_s)))
    return out


def draw_channel_mask(channels: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Per-channel keep/drop multiplier including the 1/(1-rate) rescale."""
    if not 0.0 <= rate < 1.0:
        raise InputError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(channels, dtype=np.float64)
    keep = rng.random(channels) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def apply_dropout(f: FeatureMap, rate: float, rng: np.random.Generator) -> FeatureMap:
    """Zero whole channel planes with probability rate, rescaling survivors."""
    mask = draw_channel_mask(f.channels, rate, rng)
    data = (np.asarray(f.data, dtype=np.float64) * mask[None, None, :]).astype(np.float32)
    return FeatureMap(data=data, normalized=False)
