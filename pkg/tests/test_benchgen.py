from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest

from geomatch import InputError
from geomatch.benchgen import (
    AnnotationCorpus,
    ImageRecord,
    build_benchmark,
    corpus_from_coco,
    dump_manifest,
    filter_images,
    sample_cross_pairs,
    sample_intra_pairs,
    split_species,
    stats_dict,
)

from conftest import make_corpus


def build_corpus(**kw):
    return corpus_from_coco(make_corpus(**kw))


# ----------------------------------------------------------------- ingest

def test_coco_ingest_fields():
    corpus = build_corpus()
    assert len(corpus) == 28
    rec = corpus.images[0]
    assert rec.keypoints.shape == (8, 2)
    assert rec.visibility.shape == (8,)
    assert corpus.family_of("cat") == "felid"
    assert corpus.family_of("dog") == "canid"
    assert corpus.species_names() == ["cat", "dog", "lion"]


def test_coco_visibility_flag_nonzero():
    doc = make_corpus(families={"f": {"s": 1}})
    kps = doc["annotations"][0]["keypoints"]
    kps[2] = 0   # kp0 invisible
    kps[5] = 1   # kp1 occluded but annotated: counts as visible
    kps[8] = 2   # kp2 visible
    corpus = corpus_from_coco(doc)
    vis = corpus.images[0].visibility
    assert not vis[0]
    assert vis[1]
    assert vis[2]


def test_coco_multi_instance_counted():
    corpus = build_corpus(multi_instance_ids=(2, 5))
    assert corpus.record("2").instance_count == 2
    assert corpus.record("5").instance_count == 2
    assert corpus.record("1").instance_count == 1


def test_coco_first_annotation_wins():
    doc = make_corpus(families={"f": {"s": 1}})
    second = dict(doc["annotations"][0])
    second["id"] = 999
    second["keypoints"] = [0.0, 0.0, 0] * 8
    doc["annotations"].append(second)
    corpus = corpus_from_coco(doc)
    assert corpus.record("1").visible_count > 0
    assert corpus.record("1").instance_count == 2


def test_coco_rejects_unknown_category():
    doc = make_corpus(families={"f": {"s": 1}})
    doc["annotations"][0]["category_id"] = 42
    with pytest.raises(InputError):
        corpus_from_coco(doc)


def test_filter_drops_sparse_and_crowded():
    corpus = build_corpus(multi_instance_ids=(3,), sparse_ids=(4,))
    kept = filter_images(corpus)
    ids = {im.image_id for im in kept.images}
    assert "3" not in ids
    assert "4" not in ids
    for im in kept.images:
        assert im.instance_count == 1
        assert im.visible_count >= 3


def test_corpus_rejects_duplicate_ids():
    rec = ImageRecord("a", "s", "f", np.zeros((3, 2)), np.ones(3, dtype=bool))
    with pytest.raises(InputError):
        AnnotationCorpus(images=(rec, rec))


def test_corpus_rejects_species_in_two_families():
    a = ImageRecord("a", "s", "f1", np.zeros((3, 2)), np.ones(3, dtype=bool))
    b = ImageRecord("b", "s", "f2", np.zeros((3, 2)), np.ones(3, dtype=bool))
    with pytest.raises(InputError):
        AnnotationCorpus(images=(a, b))


# ------------------------------------------------------------------ split

def test_split_sizes_regular_species():
    corpus = build_corpus(
        families={"felid": {"cat": 60}}, multi_instance_ids=(), sparse_ids=()
    )
    split = split_species(filter_images(corpus), n_val=20, n_test=30,
                          holdout_below=50)
    n = len(filter_images(corpus).images_of("cat"))
    assert len(split.val["cat"]) == 20
    assert len(split.test["cat"]) == 30
    assert len(split.train["cat"]) == n - 50
    buckets = (set(split.train["cat"]), set(split.val["cat"]),
               set(split.test["cat"]))
    assert not (buckets[0] & buckets[1] or buckets[0] & buckets[2]
                or buckets[1] & buckets[2])
    assert split.holdout_species == ()


def test_split_holdout_small_species_all_test():
    # 3 lynx images < n_val + n_test = 5: everything goes to test
    corpus = build_corpus(families={"felid": {"cat": 60, "lynx": 3}})
    filtered = filter_images(corpus)
    split = split_species(filtered, n_val=2, n_test=3, holdout_below=50)
    assert "lynx" in split.holdout_species
    assert split.train["lynx"] == []
    assert split.val["lynx"] == []
    assert set(split.test["lynx"]) == {
        im.image_id for im in filtered.images_of("lynx")
    }


def test_split_holdout_large_enough_gets_val_test():
    corpus = build_corpus(families={"felid": {"cat": 60, "lynx": 20}})
    filtered = filter_images(corpus)
    split = split_species(filtered, n_val=4, n_test=6, holdout_below=30)
    assert "lynx" in split.holdout_species
    assert split.train["lynx"] == []
    assert len(split.val["lynx"]) == 4
    assert len(split.test["lynx"]) == 6
    assert not set(split.val["lynx"]) & set(split.test["lynx"])


def test_split_deterministic_per_species():
    corpus = build_corpus(families={"felid": {"cat": 60, "lion": 55}})
    filtered = filter_images(corpus)
    a = split_species(filtered, n_val=5, n_test=7, holdout_below=10, seed=3)
    b = split_species(filtered, n_val=5, n_test=7, holdout_below=10, seed=3)
    assert a.val == b.val and a.test == b.test and a.train == b.train
    c = split_species(filtered, n_val=5, n_test=7, holdout_below=10, seed=4)
    assert a.val != c.val or a.test != c.test


# ------------------------------------------------------------------ pairs

def all_visible_corpus(families):
    """Corpus where every keypoint is visible, so no pair gets filtered."""
    doc = make_corpus(families=families)
    for ann in doc["annotations"]:
        for k in range(2, len(ann["keypoints"]), 3):
            ann["keypoints"][k] = 2
    return corpus_from_coco(doc)


def test_intra_val_test_exhaustive():
    corpus = all_visible_corpus({"felid": {"cat": 20}})
    split = split_species(corpus, n_val=4, n_test=5, holdout_below=3)
    pairs = sample_intra_pairs(split)
    assert len(pairs["val"]) == 4 * 3 // 2
    assert len(pairs["test"]) == 5 * 4 // 2
    for rec in pairs["val"]:
        assert rec.src_id < rec.tgt_id


def test_intra_train_cap_small_species():
    # 5 train images: C(5,2)=10 < 50*5, so the cap is the full enumeration
    corpus = all_visible_corpus({"felid": {"cat": 14}})
    split = split_species(corpus, n_val=4, n_test=5, holdout_below=3)
    assert len(split.train["cat"]) == 5
    pairs = sample_intra_pairs(split)
    assert len(pairs["train"]) == 10
    assert len({(r.src_id, r.tgt_id) for r in pairs["train"]}) == 10


def test_intra_train_cap_binds():
    # 30 train images: cap = min(50*30, 435) = 435; use a species large
    # enough that 50*n < C(n,2): n=102 -> 5100 < 5151
    corpus = all_visible_corpus({"felid": {"cat": 112}})
    split = split_species(corpus, n_val=4, n_test=6, holdout_below=3)
    n_train = len(split.train["cat"])
    assert n_train == 102
    pairs = sample_intra_pairs(split)
    assert len(pairs["train"]) == 50 * n_train


def test_pairs_sorted_and_unique():
    corpus = all_visible_corpus({"felid": {"cat": 30, "lion": 25}})
    split = split_species(corpus, n_val=4, n_test=5, holdout_below=3)
    pairs = sample_intra_pairs(split)
    for bucket in pairs.values():
        keys = [(r.src_id, r.tgt_id) for r in bucket]
        assert keys == sorted(keys)
        assert len(keys) == len(set(keys))


def test_visibility_filter_runs_after_sampling():
    # two visibility cliques: cross-clique pairs share no keypoints and are
    # dropped after enumeration, so the val count falls below C(6,2)
    from geomatch.benchgen import BenchmarkSplit

    vis_a = np.array([1, 1, 1, 1, 0, 0, 0, 0], dtype=bool)
    vis_b = ~vis_a
    records = []
    for i in range(1, 7):
        records.append(ImageRecord(
            image_id=str(i), species="cat", family="felid",
            keypoints=np.full((8, 2), 5.0),
            visibility=vis_a if i <= 3 else vis_b,
        ))
    corpus = AnnotationCorpus(images=tuple(records))
    split = BenchmarkSplit(corpus=corpus, seed=0, n_val=6, n_test=1)
    split.train = {"cat": []}
    split.val = {"cat": [str(i) for i in range(1, 7)]}
    split.test = {"cat": []}
    pairs = sample_intra_pairs(split)
    keys = {(r.src_id, r.tgt_id) for r in pairs["val"]}
    assert keys == {("1", "2"), ("1", "3"), ("2", "3"),
                    ("4", "5"), ("4", "6"), ("5", "6")}


def test_cross_species_exhaustive_within_family():
    corpus = all_visible_corpus(
        {"felid": {"cat": 12, "lion": 10}, "canid": {"dog": 11}}
    )
    split = split_species(corpus, n_val=3, n_test=4, holdout_below=2)
    cross = sample_cross_pairs(split)
    cs = cross["cross_species"]
    # only cat x lion (same family); val 3*3, test 4*4
    assert len(cs["val"]) == 9
    assert len(cs["test"]) == 16
    cat_ids = set(split.val["cat"]) | set(split.test["cat"])
    dog_ids = set(split.val["dog"]) | set(split.test["dog"])
    for rec in cs["val"] + cs["test"]:
        assert not ({rec.src_id, rec.tgt_id} & dog_ids)


def test_cross_family_sampled_and_capped():
    corpus = all_visible_corpus(
        {"felid": {"cat": 12}, "canid": {"dog": 11}}
    )
    split = split_species(corpus, n_val=3, n_test=4, holdout_below=2)
    cross = sample_cross_pairs(split)
    cf = cross["cross_family"]
    assert len(cf["val"]) == 3   # n_val, well under 3*3
    assert len(cf["test"]) == 4
    # capped at the product when the pool is tiny
    corpus2 = all_visible_corpus(
        {"felid": {"cat": 9}, "canid": {"dog": 9}}
    )
    split2 = split_species(corpus2, n_val=1, n_test=2, holdout_below=2)
    cross2 = sample_cross_pairs(split2)
    assert len(cross2["cross_family"]["val"]) == 1


def test_cross_pairs_val_test_only():
    corpus = all_visible_corpus({"felid": {"cat": 12}, "canid": {"dog": 11}})
    split = split_species(corpus, n_val=3, n_test=4, holdout_below=2)
    cross = sample_cross_pairs(split)
    assert set(cross["cross_species"]) == {"val", "test"}
    assert set(cross["cross_family"]) == {"val", "test"}


# -------------------------------------------------------------- manifest

def test_build_benchmark_byte_identical():
    doc = make_corpus(families={"felid": {"cat": 20, "lion": 16},
                                "canid": {"dog": 18}})
    a = build_benchmark(corpus_from_coco(doc), n_val=3, n_test=4,
                        holdout_below=5, seed=11)
    b = build_benchmark(corpus_from_coco(doc), n_val=3, n_test=4,
                        holdout_below=5, seed=11)
    assert dump_manifest(a) == dump_manifest(b)
    c = build_benchmark(corpus_from_coco(doc), n_val=3, n_test=4,
                        holdout_below=5, seed=12)
    assert dump_manifest(a) != dump_manifest(c)


def test_manifest_mutual_visibility_floor():
    doc = make_corpus(families={"felid": {"cat": 20, "lion": 16},
                                "canid": {"dog": 18}})
    split = build_benchmark(corpus_from_coco(doc), n_val=3, n_test=4,
                            holdout_below=5, seed=11)
    for setting, buckets in split.pairs.items():
        for records in buckets.values():
            for rec in records:
                assert len(rec.mutual_visible) >= 3


def test_stats_dict_counts():
    doc = make_corpus(families={"felid": {"cat": 20}})
    split = build_benchmark(corpus_from_coco(doc), n_val=3, n_test=4,
                            holdout_below=5, seed=0)
    stats = stats_dict(split)
    sp = stats["species"]["cat"]
    assert sp["val"] == 3 and sp["test"] == 4
    assert sp["train"] == sp["images"] - 7
    assert not sp["holdout"]
    assert "intra" in stats["pair_counts"]
