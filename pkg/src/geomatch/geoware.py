"""Keypoint subgroup schemas and the geometry-aware correspondence predicate.

A keypoint correspondence is geometry-aware when the keypoint belongs to a
subgroup of semantically similar parts and at least one other member of that
subgroup is visible in the target image, so disambiguating the match needs
orientation understanding rather than appearance alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class SubgroupSchema:
    """Per-category keypoint subgroups plus the left/right flip permutation.

    Subgroup index lists are disjoint, each has >= 2 members, and the flip
    map is an involution that maps every subgroup onto itself. Keypoints
    outside every subgroup are always 'standard'.
    """

    category: str
    subgroups: dict[str, tuple[int, ...]]
    flip_map: tuple[int, ...]

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for name, members in self.subgroups.items():
            if len(members) < 2:
                raise InputError(f"subgroup {name!r} needs >= 2 members")
            if seen & set(members):
                raise InputError(f"subgroup {name!r} overlaps another subgroup")
            seen |= set(members)
        n = len(self.flip_map)
        if sorted(self.flip_map) != list(range(n)):
            raise InputError("flip_map is not a permutation")
        if any(self.flip_map[self.flip_map[i]] != i for i in range(n)):
            raise InputError("flip_map is not an involution")
        if any(k >= n for k in seen):
            raise InputError("subgroup index outside flip_map range")
        for name, members in self.subgroups.items():
            if {self.flip_map[i] for i in members} != set(members):
                raise InputError(f"flip_map does not map subgroup {name!r} onto itself")

    def subgroup_of(self, kp: int) -> str | None:
        for name, members in self.subgroups.items():
            if kp in members:
                return name
        return None

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SubgroupSchema":
        return cls(
            category=doc["category"],
            subgroups={k: tuple(v) for k, v in doc["subgroups"].items()},
            flip_map=tuple(doc["flip_map"]),
        )

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "subgroups": {k: list(v) for k, v in self.subgroups.items()},
            "flip_map": list(self.flip_map),
        }


@dataclass(frozen=True)
class KeypointSet:
    """Annotated keypoints of one image instance.

    xy is (K, 2) pixel coordinates; visibility flags which ones are
    annotated as visible. bbox is (x, y, w, h) in pixels when present.
    """

    xy: np.ndarray
    visibility: np.ndarray
    image_size: tuple[int, int]
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        xy = np.asarray(self.xy, dtype=np.float64)
        vis = np.asarray(self.visibility, dtype=np.bool_)
        if xy.ndim != 2 or xy.shape[1] != 2 or vis.shape != (xy.shape[0],):
            raise InputError("keypoints must be (K, 2) with matching visibility")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "visibility", vis)
        w, h = self.image_size
        inside = ((xy[vis, 0] >= 0) & (xy[vis, 0] < w)
                  & (xy[vis, 1] >= 0) & (xy[vis, 1] < h))
        if not bool(np.all(inside)):
            raise InputError("visible keypoint outside image bounds")
        if self.bbox is not None:
            bx, by, bw, bh = self.bbox
            if bx < 0 or by < 0 or bw <= 0 or bh <= 0 or bx + bw > w or by + bh > h:
                raise InputError(f"bbox {self.bbox} outside {w}x{h} image")
        xy.setflags(write=False)
        vis.setflags(write=False)

    def __len__(self) -> int:
        return self.xy.shape[0]


@dataclass(frozen=True)
class AnnotatedPair:
    """A source/target image pair with mutually visible keypoint indices."""

    source: KeypointSet
    target: KeypointSet
    category: str
    mutual_visible: tuple[int, ...]
    azimuth_difference: int | None = None
    pair_id: str = ""

    def __post_init__(self) -> None:
        for k in self.mutual_visible:
            if not (self.source.visibility[k] and self.target.visibility[k]):
                raise InputError(f"keypoint {k} listed mutual-visible but not visible in both")
        if self.azimuth_difference is not None and not 0 <= self.azimuth_difference <= 4:
            raise InputError(f"azimuth difference must be 0..4, got {self.azimuth_difference}")


def mutual_visible_indices(source: KeypointSet, target: KeypointSet) -> tuple[int, ...]:
    both = source.visibility & target.visibility
    return tuple(int(i) for i in np.nonzero(both)[0])


def is_geometry_aware(pair: AnnotatedPair, schema: SubgroupSchema, kp: int) -> bool:
    """True iff kp belongs to a subgroup and another member of that subgroup
    is visible in the target image."""
    if kp not in pair.mutual_visible:
        raise InputError(f"keypoint {kp} is not mutually visible in pair {pair.pair_id!r}")
    group = schema.subgroup_of(kp)
    if group is None:
        return False
    for j in schema.subgroups[group]:
        if j != kp and pair.target.visibility[j]:
            return True
    return False


@dataclass(frozen=True)
class GeoSplit:
    """Per-keypoint geo/standard labeling plus corpus-level proportions."""

    labels: dict[str, dict[int, bool]]
    geo_keypoint_fraction: float
    geo_image_fraction: float
    total_keypoints: int = 0
    total_pairs: int = 0


def split_geo_standard(pairs: Sequence[AnnotatedPair],
                       schemas: Mapping[str, SubgroupSchema]) -> GeoSplit:
    """Label every mutually visible keypoint of every pair and report the
    fraction of geo keypoint pairs and of image pairs containing >= 1 geo
    keypoint."""
    labels: dict[str, dict[int, bool]] = {}
    n_geo_kp = 0
    n_kp = 0
    n_geo_pairs = 0
    for idx, pair in enumerate(pairs):
        if pair.category not in schemas:
            raise InputError(f"no subgroup schema for category {pair.category!r}")
        schema = schemas[pair.category]
        key = pair.pair_id or str(idx)
        per_kp = {kp: is_geometry_aware(pair, schema, kp) for kp in pair.mutual_visible}
        labels[key] = per_kp
        n_kp += len(per_kp)
        n_geo_kp += sum(per_kp.values())
        if any(per_kp.values()):
            n_geo_pairs += 1
    return GeoSplit(
        labels=labels,
        geo_keypoint_fraction=n_geo_kp / n_kp if n_kp else 0.0,
        geo_image_fraction=n_geo_pairs / len(pairs) if pairs else 0.0,
        total_keypoints=n_kp,
        total_pairs=len(pairs),
    )
