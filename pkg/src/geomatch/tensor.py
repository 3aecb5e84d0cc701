"""Dense feature-map container, normalization, grid transforms, and sub-pixel sampling.

Conventions used throughout the package:

* A feature map is a row-major (H, W, C) float32 grid. Cell (y, x) has its
  center at continuous grid coordinate (x, y); sub-pixel positions are allowed
  in [-0.5, W-0.5] x [-0.5, H-0.5].
* Image pixels map to grid coordinates with the center-aligned rule
  ``x_grid = (x_img + 0.5) * grid_w / image_w - 0.5`` so that horizontal
  flipping commutes with coordinate mirroring exactly.
* Storage is float32; norms and other reductions accumulate in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError

VARIANT_LABELS = ("identity", "hflip", "rot90", "rot180", "rot270")


@dataclass(frozen=True)
class FeatureMap:
    """Immutable H x W x C descriptor grid."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise InputError(f"feature map must be (H, W, C), got shape {self.data.shape}")
        if self.data.dtype != np.float32:
            object.__setattr__(self, "data", self.data.astype(np.float32))
        if not np.all(np.isfinite(self.data)):
            raise NumericalError("feature map contains non-finite values")
        self.data.setflags(write=False)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class InstanceMask:
    """Binary grid at feature resolution."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        if self.bits.ndim != 2:
            raise InputError(f"mask must be (H, W), got shape {self.bits.shape}")
        if self.bits.dtype != np.bool_:
            object.__setattr__(self, "bits", self.bits.astype(np.bool_))
        self.bits.setflags(write=False)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class GridPoint:
    """Continuous grid coordinate; cell centers sit at integer positions."""

    x: float
    y: float


@dataclass(frozen=True)
class ImagePoint:
    """Pixel coordinate with origin at the top-left, x rightward, y downward."""

    x: float
    y: float


def l2_normalize(f: FeatureMap) -> FeatureMap:
    """Scale every per-location channel vector to unit L2 norm.

    Raises NumericalError for any location whose norm falls below 1e-12;
    zero descriptors make cosine similarity undefined and must not pass
    silently.
    """
    d64 = f.data.astype(np.float64)
    norms = np.sqrt(np.einsum("hwc,hwc->hw", d64, d64))
    if np.any(norms < 1e-12):
        ys, xs = np.nonzero(norms < 1e-12)
        raise NumericalError(f"degenerate descriptor at cell (y={ys[0]}, x={xs[0]})")
    out = (d64 / norms[:, :, None]).astype(np.float32)
    return FeatureMap(out, normalized=True)


def flip_horizontal(f: FeatureMap) -> FeatureMap:
    """Mirror the grid left-right: output(y, x) = input(y, W-1-x)."""
    return FeatureMap(np.ascontiguousarray(f.data[:, ::-1, :]), normalized=f.normalized)


def rotate90(f: FeatureMap, quarter_turns: int) -> FeatureMap:
    """Rotate the grid counter-clockwise by 90 degrees times ``quarter_turns``.

    Dimensions swap for odd turns. quarter_turns must be in {0, 1, 2, 3}.
    """
    if quarter_turns not in (0, 1, 2, 3):
        raise InputError(f"quarter_turns must be in {{0,1,2,3}}, got {quarter_turns}")
    out = np.ascontiguousarray(np.rot90(f.data, k=quarter_turns, axes=(0, 1)))
    return FeatureMap(out, normalized=f.normalized)


def flip_mask(m: InstanceMask) -> InstanceMask:
    return InstanceMask(np.ascontiguousarray(m.bits[:, ::-1]))


def rotate_mask(m: InstanceMask, quarter_turns: int) -> InstanceMask:
    if quarter_turns not in (0, 1, 2, 3):
        raise InputError(f"quarter_turns must be in {{0,1,2,3}}, got {quarter_turns}")
    return InstanceMask(np.ascontiguousarray(np.rot90(m.bits, k=quarter_turns)))


def transform_features(f: FeatureMap, variant: str) -> FeatureMap:
    """Apply a named pose variant to a feature grid (synthetic fixtures only;
    real variant features come from re-extracting the transformed image)."""
    if variant == "identity":
        return f
    if variant == "hflip":
        return flip_horizontal(f)
    if variant in ("rot90", "rot180", "rot270"):
        return rotate90(f, {"rot90": 1, "rot180": 2, "rot270": 3}[variant])
    raise InputError(f"unknown variant {variant!r}")


def transform_mask(m: InstanceMask, variant: str) -> InstanceMask:
    if variant == "identity":
        return m
    if variant == "hflip":
        return flip_mask(m)
    if variant in ("rot90", "rot180", "rot270"):
        return rotate_mask(m, {"rot90": 1, "rot180": 2, "rot270": 3}[variant])
    raise InputError(f"unknown variant {variant!r}")


def transform_grid_point(p: GridPoint, grid_w: int, grid_h: int, variant: str) -> GridPoint:
    """Map a grid coordinate from the original frame into the variant frame.

    The returned coordinate addresses the same physical location in the grid
    produced by ``transform_features`` (the exporter applies the identical
    transform in image space before extraction). grid_w/grid_h describe the
    ORIGINAL grid; rotated frames have swapped dimensions.
    """
    x, y = p.x, p.y
    if variant == "identity":
        return p
    if variant == "hflip":
        return GridPoint((grid_w - 1) - x, y)
    if variant == "rot90":
        return GridPoint(y, (grid_w - 1) - x)
    if variant == "rot180":
        return GridPoint((grid_w - 1) - x, (grid_h - 1) - y)
    if variant == "rot270":
        return GridPoint((grid_h - 1) - y, x)
    raise InputError(f"unknown variant {variant!r}")


def inverse_transform_grid_point(p: GridPoint, grid_w: int, grid_h: int, variant: str) -> GridPoint:
    """Inverse of transform_grid_point (grid_w/grid_h still name the original frame)."""
    inverse = {"identity": "identity", "hflip": "hflip", "rot90": "rot270",
               "rot180": "rot180", "rot270": "rot90"}[variant]
    if variant == "rot90":
        # Original frame of the inverse rotation is the rotated frame (h, w swap).
        return transform_grid_point(p, grid_h, grid_w, inverse)
    if variant == "rot270":
        return transform_grid_point(p, grid_h, grid_w, inverse)
    return transform_grid_point(p, grid_w, grid_h, inverse)


def image_to_grid(p: ImagePoint, image_w: float, image_h: float, grid_w: int, grid_h: int) -> GridPoint:
    """Center-aligned mapping from image pixels to continuous grid coordinates."""
    return GridPoint(
        (p.x + 0.5) * grid_w / image_w - 0.5,
        (p.y + 0.5) * grid_h / image_h - 0.5,
    )


def grid_to_image(p: GridPoint, image_w: float, image_h: float, grid_w: int, grid_h: int) -> ImagePoint:
    """Inverse of image_to_grid."""
    return ImagePoint(
        (p.x + 0.5) * image_w / grid_w - 0.5,
        (p.y + 0.5) * image_h / grid_h - 0.5,
    )


def sample_descriptor(f: FeatureMap, p: GridPoint, method: str = "bilinear") -> np.ndarray:
    """Sample the descriptor at a sub-pixel grid position.

    Bilinear interpolation over the four surrounding cell centers with border
    clamping; when the map is normalized the blended vector is re-normalized
    to unit length. ``method="nearest"`` rounds to the closest cell instead.
    """
    h, w = f.height, f.width
    if not (-0.5 <= p.x <= w - 0.5 and -0.5 <= p.y <= h - 0.5):
        raise InputError(f"grid point ({p.x}, {p.y}) outside {w}x{h} grid bounds")
    if method == "nearest":
        xi = min(max(int(round(p.x)), 0), w - 1)
        yi = min(max(int(round(p.y)), 0), h - 1)
        return f.data[yi, xi].copy()
    if method != "bilinear":
        raise InputError(f"unknown sampling method {method!r}")
    x = min(max(p.x, 0.0), w - 1.0)
    y = min(max(p.y, 0.0), h - 1.0)
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    d = f.data.astype(np.float64)
    v = ((1 - fy) * (1 - fx) * d[y0, x0] + (1 - fy) * fx * d[y0, x1]
         + fy * (1 - fx) * d[y1, x0] + fy * fx * d[y1, x1])
    if f.normalized:
        n = np.sqrt(np.dot(v, v))
        if n < 1e-12:
            raise NumericalError("degenerate descriptor after interpolation")
        v = v / n
    return v.astype(np.float32)
