from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geomatch import (
    FeatureMap,
    GridPoint,
    ImagePoint,
    InputError,
    InstanceMask,
    NumericalError,
    grid_to_image,
    image_to_grid,
    inverse_transform_grid_point,
    l2_normalize,
    flip_horizontal,
    rotate90,
    sample_descriptor,
    transform_features,
    transform_grid_point,
    transform_mask,
)
from geomatch.tensor import VARIANT_LABELS

from conftest import random_feature_map


def test_feature_map_shape_checked():
    with pytest.raises(InputError):
        FeatureMap(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(InputError):
        FeatureMap(np.zeros((2, 2, 2, 2), dtype=np.float32))


def test_feature_map_coerces_to_float32():
    fmap = FeatureMap(np.ones((2, 2, 3), dtype=np.float64))
    assert fmap.data.dtype == np.float32


def test_feature_map_rejects_non_finite():
    data = np.ones((2, 2, 3), dtype=np.float32)
    data[0, 0, 0] = np.nan
    with pytest.raises(NumericalError):
        FeatureMap(data)


def test_feature_map_is_read_only(rng):
    fmap = random_feature_map(rng, 2, 2, 3)
    with pytest.raises(ValueError):
        fmap.data[0, 0, 0] = 1.0


def test_l2_normalize_known_vector():
    data = np.zeros((1, 1, 2), dtype=np.float32)
    data[0, 0] = [3.0, 4.0]
    out = l2_normalize(FeatureMap(data))
    assert np.allclose(out.data[0, 0], [0.6, 0.8])
    assert out.normalized


def test_l2_normalize_unit_norms(rng):
    fmap = random_feature_map(rng, 7, 5, 16, normalized=False)
    out = l2_normalize(fmap)
    norms = np.linalg.norm(out.data, axis=-1)
    assert np.all(np.abs(norms - 1.0) < 1e-6)


def test_l2_normalize_rejects_degenerate():
    data = np.ones((2, 3, 4), dtype=np.float32)
    data[1, 2] = 0.0
    with pytest.raises(NumericalError, match=r"\(y=1, x=2\)"):
        l2_normalize(FeatureMap(data))


def test_flip_horizontal_reverses_columns(rng):
    fmap = random_feature_map(rng, 4, 6, 3)
    flipped = flip_horizontal(fmap)
    assert np.array_equal(flipped.data, fmap.data[:, ::-1, :])


def test_flip_horizontal_involution(rng):
    fmap = random_feature_map(rng, 5, 9, 4)
    twice = flip_horizontal(flip_horizontal(fmap))
    # bit-exact round trip
    assert np.array_equal(twice.data, fmap.data)


def test_flip_width_one_fixed_point(rng):
    fmap = random_feature_map(rng, 4, 1, 3)
    assert np.array_equal(flip_horizontal(fmap).data, fmap.data)


def test_rotate90_counterclockwise():
    # independent oracle: place a marker and track it by hand.
    data = np.zeros((2, 3, 1), dtype=np.float32)
    data[0, 2, 0] = 1.0  # top-right corner
    out = rotate90(FeatureMap(data), 1)
    assert out.data.shape == (3, 2, 1)
    # counterclockwise sends top-right to top-left
    assert out.data[0, 0, 0] == 1.0


def test_rotate90_four_times_identity(rng):
    fmap = random_feature_map(rng, 3, 7, 2)
    out = fmap
    for _ in range(4):
        out = rotate90(out, 1)
    assert np.array_equal(out.data, fmap.data)


def test_rotate90_rejects_bad_turns(rng):
    fmap = random_feature_map(rng, 2, 2, 2)
    with pytest.raises(InputError):
        rotate90(fmap, 4)


def test_transform_features_labels(rng):
    fmap = random_feature_map(rng, 4, 6, 3)
    assert np.array_equal(
        transform_features(fmap, "identity").data, fmap.data
    )
    assert np.array_equal(
        transform_features(fmap, "hflip").data, flip_horizontal(fmap).data
    )
    for turns, label in ((1, "rot90"), (2, "rot180"), (3, "rot270")):
        assert np.array_equal(
            transform_features(fmap, label).data, rotate90(fmap, turns).data
        )
    with pytest.raises(InputError):
        transform_features(fmap, "rot45")


def test_transform_mask_matches_features(rng):
    bits = np.random.default_rng(0).random((4, 6)) < 0.5
    mask = InstanceMask(bits)
    for label in VARIANT_LABELS:
        got = transform_mask(mask, label)
        # oracle: run the same transform on a 1-channel float map
        ref = transform_features(
            FeatureMap(bits[..., None].astype(np.float32)), label
        )
        assert np.array_equal(got.bits, ref.data[..., 0] > 0.5)


@given(
    y=st.integers(0, 4),
    x=st.integers(0, 6),
    label=st.sampled_from(VARIANT_LABELS),
)
def test_transform_grid_point_tracks_cells(y, x, label):
    h, w = 5, 7
    data = np.zeros((h, w, 1), dtype=np.float32)
    data[y, x, 0] = 1.0
    moved = transform_features(FeatureMap(data), label)
    pt = transform_grid_point(GridPoint(float(x), float(y)), w, h, label)
    ny, nx = int(round(pt.y)), int(round(pt.x))
    assert moved.data[ny, nx, 0] == 1.0


@given(
    y=st.floats(0, 4, allow_nan=False),
    x=st.floats(0, 6, allow_nan=False),
    label=st.sampled_from(VARIANT_LABELS),
)
def test_inverse_transform_round_trip(y, x, label):
    h, w = 5, 7
    pt = GridPoint(x, y)
    fwd = transform_grid_point(pt, w, h, label)
    back = inverse_transform_grid_point(fwd, w, h, label)
    assert abs(back.x - pt.x) < 1e-9
    assert abs(back.y - pt.y) < 1e-9


def test_image_to_grid_example():
    # 100x100 image, 10x10 grid: image (4.5, 4.5) is the center of the
    # top-left 10x10 block, i.e. grid cell (0, 0).
    pt = image_to_grid(ImagePoint(4.5, 4.5), 100, 100, 10, 10)
    assert abs(pt.x - 0.0) < 1e-12
    assert abs(pt.y - 0.0) < 1e-12


def test_grid_to_image_example():
    pt = grid_to_image(GridPoint(0.0, 0.0), 100, 100, 10, 10)
    assert abs(pt.x - 4.5) < 1e-12
    assert abs(pt.y - 4.5) < 1e-12


@given(
    x=st.floats(0, 99, allow_nan=False),
    y=st.floats(0, 63, allow_nan=False),
)
def test_image_grid_round_trip(x, y):
    pt = ImagePoint(x, y)
    g = image_to_grid(pt, 100, 64, 12, 9)
    back = grid_to_image(g, 100, 64, 12, 9)
    assert abs(back.x - x) < 1e-9
    assert abs(back.y - y) < 1e-9


def test_image_to_grid_flip_commutes():
    # mirroring in image space, then mapping to the grid, equals mapping
    # first and mirroring in grid coordinates
    iw, ih, gw, gh = 96, 64, 12, 8
    for x_img in (0.0, 3.7, 40.0, 95.0):
        p = image_to_grid(ImagePoint(iw - 1 - x_img, 10.0), iw, ih, gw, gh)
        q = image_to_grid(ImagePoint(x_img, 10.0), iw, ih, gw, gh)
        assert abs(p.x - ((gw - 1) - q.x)) < 1e-9


def test_sample_descriptor_integer_point(rng):
    fmap = random_feature_map(rng, 6, 6, 8)
    got = sample_descriptor(fmap, GridPoint(3.0, 2.0))
    assert np.allclose(got, fmap.data[2, 3], atol=1e-6)


def test_sample_descriptor_midpoint_unnormalized():
    data = np.zeros((1, 2, 2), dtype=np.float32)
    data[0, 0] = [1.0, 0.0]
    data[0, 1] = [0.0, 1.0]
    got = sample_descriptor(FeatureMap(data), GridPoint(0.5, 0.0))
    assert np.allclose(got, [0.5, 0.5])


def test_sample_descriptor_renormalizes_when_normalized():
    data = np.zeros((1, 2, 2), dtype=np.float32)
    data[0, 0] = [1.0, 0.0]
    data[0, 1] = [0.0, 1.0]
    fmap = FeatureMap(data, normalized=True)
    got = sample_descriptor(fmap, GridPoint(0.5, 0.0))
    assert np.allclose(got, [0.5**0.5, 0.5**0.5], atol=1e-6)


def test_sample_descriptor_border_band_clamps(rng):
    # positions in the half-cell band around the border clamp to the edge
    fmap = random_feature_map(rng, 4, 4, 5)
    corner = sample_descriptor(fmap, GridPoint(0.0, 0.0))
    band = sample_descriptor(fmap, GridPoint(-0.5, -0.25))
    assert np.allclose(band, corner, atol=1e-6)


def test_sample_descriptor_rejects_far_outside(rng):
    fmap = random_feature_map(rng, 4, 4, 5)
    with pytest.raises(InputError):
        sample_descriptor(fmap, GridPoint(-3.0, 0.0))


def test_sample_descriptor_nearest(rng):
    fmap = random_feature_map(rng, 4, 4, 5)
    got = sample_descriptor(fmap, GridPoint(1.4, 2.6), method="nearest")
    assert np.array_equal(got, fmap.data[3, 1])
