"""Deterministic correspondence-benchmark construction from pose annotations.

Pipeline: filter images (>= 3 visible keypoints, exactly one instance),
split each species into train/val/test with small-species holdouts, pair
images within species (train capped at min(50 * N_train, C(N_train, 2)),
val/test exhaustive), across species within a family (exhaustive over
val/test), and across families (sampled), then drop every pair with fewer
than 3 mutually visible keypoints. All sampling runs on keyed Philox
substreams so identical corpus + seed gives byte-identical manifests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError
from .rng import RawSampler

MIN_MUTUAL_VISIBLE = 3
SETTINGS = ("intra", "cross_species", "cross_family")
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    species: str
    family: str
    keypoints: np.ndarray
    visibility: np.ndarray
    instance_count: int = 1
    bbox: tuple[float, float, float, float] | None = None
    image_size: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        xy = np.asarray(self.keypoints, dtype=np.float64)
        vis = np.asarray(self.visibility, dtype=np.bool_)
        if xy.ndim != 2 or xy.shape[1] != 2 or vis.shape != (xy.shape[0],):
            raise InputError(f"image {self.image_id!r}: keypoints/visibility shape mismatch")
        object.__setattr__(self, "keypoints", xy)
        object.__setattr__(self, "visibility", vis)
        xy.setflags(write=False)
        vis.setflags(write=False)

    @property
    def visible_count(self) -> int:
        return int(np.count_nonzero(self.visibility))


@dataclass(frozen=True)
class AnnotationCorpus:
    images: tuple[ImageRecord, ...]

    def __post_init__(self) -> None:
        ids = [im.image_id for im in self.images]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate image ids in corpus")
        family_of: dict[str, str] = {}
        for im in self.images:
            prev = family_of.setdefault(im.species, im.family)
            if prev != im.family:
                raise InputError(f"species {im.species!r} mapped to two families")
        object.__setattr__(self, "_by_id", {im.image_id: im for im in self.images})

    def __len__(self) -> int:
        return len(self.images)

    def record(self, image_id: str) -> ImageRecord:
        try:
            return self._by_id[image_id]
        except KeyError:
            raise InputError(f"unknown image id {image_id!r}") from None

    def species_names(self) -> list[str]:
        return sorted({im.species for im in self.images})

    def family_of(self, species: str) -> str:
        for im in self.images:
            if im.species == species:
                return im.family
        raise InputError(f"unknown species {species!r}")

    def images_of(self, species: str) -> list[ImageRecord]:
        sub = [im for im in self.images if im.species == species]
        return sorted(sub, key=lambda im: im.image_id)


def corpus_from_coco(doc: Mapping) -> AnnotationCorpus:
    """Build a corpus from COCO-style pose JSON.

    Species comes from the annotation's category name, family from the
    category's supercategory. A keypoint counts as visible when its COCO
    flag is nonzero (annotated, possibly occluded).
    """
    cats = {c["id"]: c for c in doc.get("categories", [])}
    per_image: dict = {}
    counts: dict = {}
    for ann in doc.get("annotations", []):
        iid = ann["image_id"]
        counts[iid] = counts.get(iid, 0) + 1
        per_image.setdefault(iid, ann)
    dims = {im["id"]: (int(im["width"]), int(im["height"])) for im in doc.get("images", [])}
    records = []
    for iid, ann in sorted(per_image.items(), key=lambda kv: str(kv[0])):
        cat = cats.get(ann["category_id"])
        if cat is None:
            raise InputError(f"annotation references unknown category {ann['category_id']}")
        flat = np.asarray(ann["keypoints"], dtype=np.float64).reshape(-1, 3)
        bbox = tuple(float(v) for v in ann["bbox"]) if ann.get("bbox") else None
        records.append(ImageRecord(
            image_id=str(iid),
            species=cat["name"],
            family=cat.get("supercategory", cat["name"]),
            keypoints=flat[:, :2],
            visibility=flat[:, 2] > 0,
            instance_count=counts[iid],
            bbox=bbox,
            image_size=dims.get(iid, (0, 0)),
        ))
    if not records:
        raise InputError("corpus has no annotated images")
    return AnnotationCorpus(images=tuple(records))


def filter_images(corpus: AnnotationCorpus) -> AnnotationCorpus:
    """Keep single-instance images with at least 3 visible keypoints."""
    kept = tuple(im for im in corpus.images
                 if im.instance_count == 1 and im.visible_count >= MIN_MUTUAL_VISIBLE)
    return AnnotationCorpus(images=kept)


@dataclass(frozen=True)
class PairRecord:
    src_id: str
    tgt_id: str
    mutual_visible: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"src_id": self.src_id, "tgt_id": self.tgt_id,
                "mutual_visible": list(self.mutual_visible)}


@dataclass
class BenchmarkSplit:
    corpus: AnnotationCorpus
    seed: int
    n_val: int = 20
    n_test: int = 30
    holdout_below: int = 50
    train: dict[str, list[str]] = field(default_factory=dict)
    val: dict[str, list[str]] = field(default_factory=dict)
    test: dict[str, list[str]] = field(default_factory=dict)
    holdout_species: tuple[str, ...] = ()
    pairs: dict[str, dict[str, list[PairRecord]]] = field(default_factory=dict)

    def bucket(self, split: str) -> dict[str, list[str]]:
        return {"train": self.train, "val": self.val, "test": self.test}[split]


def _mutual_visible(a: ImageRecord, b: ImageRecord) -> tuple[int, ...]:
    both = a.visibility & b.visibility
    return tuple(int(i) for i in np.nonzero(both)[0])


def _visibility_filter(corpus: AnnotationCorpus,
                       raw: Iterable[tuple[str, str]]) -> list[PairRecord]:
    out = []
    for src, tgt in raw:
        mv = _mutual_visible(corpus.record(src), corpus.record(tgt))
        if len(mv) >= MIN_MUTUAL_VISIBLE:
            out.append(PairRecord(src_id=src, tgt_id=tgt, mutual_visible=mv))
    out.sort(key=lambda r: (r.src_id, r.tgt_id))
    return out


def split_species(corpus: AnnotationCorpus, n_val: int = 20, n_test: int = 30,
                  holdout_below: int = 50, seed: int = 0) -> BenchmarkSplit:
    """Assign images to train/val/test per species.

    Species with fewer than holdout_below images are held out of training
    entirely: if they still have >= n_val + n_test images they get sampled
    val/test sets, otherwise all their images go to test.
    """
    if n_val <= 0 or n_test <= 0:
        raise InputError("n_val and n_test must be positive")
    split = BenchmarkSplit(corpus=corpus, seed=seed, n_val=n_val, n_test=n_test,
                           holdout_below=holdout_below)
    holdout = []
    for species in corpus.species_names():
        ids = [im.image_id for im in corpus.images_of(species)]
        sampler = RawSampler(seed, f"split/{species}")
        is_holdout = len(ids) < holdout_below
        if is_holdout:
            holdout.append(species)
            split.train[species] = []
            if len(ids) >= n_val + n_test:
                picked = sampler.sample(ids, n_val + n_test)
                split.val[species] = sorted(picked[:n_val])
                split.test[species] = sorted(picked[n_val:])
            else:
                split.val[species] = []
                split.test[species] = sorted(ids)
            continue
        picked = sampler.sample(ids, n_val + n_test)
        val = set(picked[:n_val])
        test = set(picked[n_val:])
        split.val[species] = sorted(val)
        split.test[species] = sorted(test)
        split.train[species] = sorted(set(ids) - val - test)
    split.holdout_species = tuple(holdout)
    return split


def sample_intra_pairs(split: BenchmarkSplit, seed: int | None = None) -> dict[str, list[PairRecord]]:
    """Within-species pairs: exhaustive for val/test, capped sample for train.

    The mutual-visibility filter runs after sampling, so emitted counts can
    fall below the caps.
    """
    seed = split.seed if seed is None else seed
    out: dict[str, list[PairRecord]] = {}
    for name in SPLITS:
        bucket = split.bucket(name)
        raw: list[tuple[str, str]] = []
        for species in sorted(bucket):
            ids = sorted(bucket[species])
            n = len(ids)
            if n < 2:
                continue
            cap = n * (n - 1) // 2
            if name == "train":
                cap = min(50 * n, cap)
                sampler = RawSampler(seed, f"pairs/train/{species}")
                idx_pairs = sampler.sample_pair_indices(n, cap)
            else:
                idx_pairs = [(i, j) for j in range(n) for i in range(j)]
            raw.extend((ids[i], ids[j]) for i, j in idx_pairs)
        out[name] = _visibility_filter(split.corpus, raw)
    split.pairs["intra"] = out
    return out


def sample_cross_pairs(split: BenchmarkSplit, seed: int | None = None) -> dict[str, dict[str, list[PairRecord]]]:
    """Cross-species (exhaustive within family) and cross-family (sampled) pairs.

    Cross pairs only exist for val/test. Source/target order follows sorted
    species (resp. family) names. Every species pair inside a family is
    enumerated.
    """
    seed = split.seed if seed is None else seed
    corpus = split.corpus
    families: dict[str, list[str]] = {}
    for species in corpus.species_names():
        families.setdefault(corpus.family_of(species), []).append(species)

    cross_species: dict[str, list[PairRecord]] = {}
    for name in ("val", "test"):
        bucket = split.bucket(name)
        raw: list[tuple[str, str]] = []
        for family in sorted(families):
            members = sorted(families[family])
            for ai in range(len(members)):
                for bi in range(ai + 1, len(members)):
                    a_ids = sorted(bucket.get(members[ai], []))
                    b_ids = sorted(bucket.get(members[bi], []))
                    raw.extend((a, b) for a in a_ids for b in b_ids)
        cross_species[name] = _visibility_filter(corpus, raw)

    cross_family: dict[str, list[PairRecord]] = {}
    for name in ("val", "test"):
        bucket = split.bucket(name)
        want = split.n_val if name == "val" else split.n_test
        pool = {fam: sorted(i for sp in members for i in bucket.get(sp, []))
                for fam, members in families.items()}
        raw = []
        fams = sorted(families)
        for ai in range(len(fams)):
            for bi in range(ai + 1, len(fams)):
                a_ids, b_ids = pool[fams[ai]], pool[fams[bi]]
                if not a_ids or not b_ids:
                    continue
                k = min(want, len(a_ids) * len(b_ids))
                sampler = RawSampler(seed, f"pairs/cross_family/{name}/{fams[ai]}|{fams[bi]}")
                cells = sampler.sample_product_indices(len(a_ids), len(b_ids), k)
                raw.extend((a_ids[i], b_ids[j]) for i, j in cells)
        cross_family[name] = _visibility_filter(corpus, raw)

    split.pairs["cross_species"] = cross_species
    split.pairs["cross_family"] = cross_family
    return {"cross_species": cross_species, "cross_family": cross_family}


def build_benchmark(corpus: AnnotationCorpus, n_val: int = 20, n_test: int = 30,
                    holdout_below: int = 50, seed: int = 0) -> BenchmarkSplit:
    filtered = filter_images(corpus)
    split = split_species(filtered, n_val=n_val, n_test=n_test,
                          holdout_below=holdout_below, seed=seed)
    sample_intra_pairs(split)
    sample_cross_pairs(split)
    return split


def manifest_dict(split: BenchmarkSplit) -> dict:
    """Everything the downstream matcher needs, in canonical key order."""
    pairs = {}
    for setting in SETTINGS:
        buckets = split.pairs.get(setting, {})
        pairs[setting] = {name: [r.to_dict() for r in buckets.get(name, [])]
                          for name in SPLITS if name in buckets or setting == "intra"}
    return {
        "seed": split.seed,
        "n_val": split.n_val,
        "n_test": split.n_test,
        "holdout_below": split.holdout_below,
        "cross_species_rule": "all species pairs per family",
        "holdout_species": sorted(split.holdout_species),
        "splits": {name: {sp: sorted(ids) for sp, ids in split.bucket(name).items()}
                   for name in SPLITS},
        "pairs": pairs,
    }


def stats_dict(split: BenchmarkSplit) -> dict:
    per_species = {}
    for species in split.corpus.species_names():
        per_species[species] = {
            "images": len(split.corpus.images_of(species)),
            "train": len(split.train.get(species, [])),
            "val": len(split.val.get(species, [])),
            "test": len(split.test.get(species, [])),
            "holdout": species in split.holdout_species,
        }
    pair_counts = {setting: {name: len(records) for name, records in buckets.items()}
                   for setting, buckets in split.pairs.items()}
    return {"species": per_species, "pair_counts": pair_counts}


def dump_manifest(split: BenchmarkSplit) -> str:
    """Canonical JSON bytes for the manifest (sorted keys, fixed separators)."""
    return json.dumps(manifest_dict(split), sort_keys=True, separators=(",", ":")) + "\n"
