"""Shared fixtures: random feature maps, synthetic schemas and corpora."""
from __future__ import annotations

import numpy as np
import pytest

from geomatch import FeatureMap, InstanceMask, l2_normalize


def random_feature_map(rng, h, w, c, normalized=True):
    data = rng.normal(size=(h, w, c)).astype(np.float32)
    fmap = FeatureMap(data)
    return l2_normalize(fmap) if normalized else fmap


def full_mask(h, w):
    return InstanceMask(np.ones((h, w), dtype=bool))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_map(rng):
    return random_feature_map(rng, 6, 5, 8)


def make_subgroup_doc():
    # 8 keypoints: 0/1 paired ears, 2 nose, 3/4 paired shoulders,
    # 5/6 paired feet, 7 tail tip.
    return {
        "category": "toy",
        "subgroups": {
            "ear": [0, 1],
            "shoulder": [3, 4],
            "foot": [5, 6],
        },
        "flip_map": [1, 0, 2, 4, 3, 6, 5, 7],
    }


def make_corpus(
    seed=7,
    families=None,
    image_size=(96, 80),
    n_keypoints=8,
    multi_instance_ids=(),
    sparse_ids=(),
):
    """Small COCO-style corpus. families: {family: {species: n_images}}."""
    if families is None:
        families = {"felid": {"cat": 12, "lion": 6}, "canid": {"dog": 10}}
    rng = np.random.default_rng(seed)
    width, height = image_size
    images, annotations, categories = [], [], []
    cat_id = 0
    img_id = 0
    ann_id = 0
    for family in sorted(families):
        for species in sorted(families[family]):
            cat_id += 1
            categories.append(
                {"id": cat_id, "name": species, "supercategory": family}
            )
            for _ in range(families[family][species]):
                img_id += 1
                images.append(
                    {
                        "id": img_id,
                        "file_name": f"{species}_{img_id:05d}.jpg",
                        "width": width,
                        "height": height,
                    }
                )
                vis = rng.random(n_keypoints) < 0.8
                if img_id in sparse_ids:
                    vis[:] = False
                    vis[0] = True
                kps = []
                for k in range(n_keypoints):
                    x = float(rng.uniform(2, width - 3))
                    y = float(rng.uniform(2, height - 3))
                    kps.extend([x, y, 2 if vis[k] else 0])
                ann_id += 1
                annotations.append(
                    {
                        "id": ann_id,
                        "image_id": img_id,
                        "category_id": cat_id,
                        "keypoints": kps,
                        "bbox": [1.0, 1.0, width - 4.0, height - 4.0],
                    }
                )
                if img_id in multi_instance_ids:
                    ann_id += 1
                    annotations.append(
                        {
                            "id": ann_id,
                            "image_id": img_id,
                            "category_id": cat_id,
                            "keypoints": list(kps),
                            "bbox": [0.0, 0.0, 10.0, 10.0],
                        }
                    )
    return {
        "images": images,
        "annotations": annotations,
        "categories": categories,
    }
