"""Geometry-aware semantic correspondence over precomputed dense feature maps.

Core pieces: feature-grid tensors and strict NPY IO, cosine similarity
matching with argmax/soft/window/kernel operators, instance matching
distance with test-time pose alignment and template voting, keypoint
subgroup schemas with the geometry-aware predicate, PCK metrics and error
breakdowns, deterministic benchmark generation, and a small trainable
post-processor with manual gradients.
"""

from .errors import GeomatchError, InputError, NumericalError
from .geoware import (AnnotatedPair, GeoSplit, KeypointSet, SubgroupSchema,
                      is_geometry_aware, mutual_visible_indices,
                      split_geo_standard)
from .matcher import (MODES, InferenceConfig, SimilarityMap, apply_operator,
                      hard_argmax, kernel_soft_argmax, match_keypoints,
                      mutual_nn_pairs, nn_field, similarity_map, soft_argmax,
                      window_soft_argmax)
from .metrics import (BREAKDOWN_CLASSES, Breakdown, EvalReport, PckConfig,
                      PckResult, aggregate, azimuth_sensitivity, breakdown,
                      classify_prediction, pck, pck_threshold)
from .npyio import (read_array, read_feature_map, read_mask, write_array,
                    write_feature_map, write_mask)
from .pose import (AlignResult, PosePrediction, PoseVariant, TemplateSet,
                   adaptive_align, imd, mutual_nn_distance, predict_pose)
from .tensor import (VARIANT_LABELS, FeatureMap, GridPoint, ImagePoint,
                     InstanceMask, flip_horizontal, flip_mask, grid_to_image,
                     image_to_grid, inverse_transform_grid_point,
                     l2_normalize, rotate90, rotate_mask, sample_descriptor,
                     transform_features, transform_grid_point, transform_mask)

__version__ = "0.1.0"

__all__ = [
    "AlignResult", "AnnotatedPair", "BREAKDOWN_CLASSES", "Breakdown",
    "EvalReport", "FeatureMap", "GeoSplit", "GeomatchError", "GridPoint",
    "ImagePoint", "InferenceConfig", "InputError", "InstanceMask", "MODES",
    "NumericalError", "PckConfig", "PckResult", "PosePrediction",
    "PoseVariant", "SimilarityMap", "SubgroupSchema", "TemplateSet",
    "VARIANT_LABELS", "adaptive_align", "aggregate", "apply_operator",
    "azimuth_sensitivity", "breakdown", "classify_prediction",
    "flip_horizontal", "flip_mask", "grid_to_image", "hard_argmax", "imd",
    "image_to_grid", "inverse_transform_grid_point", "is_geometry_aware",
    "kernel_soft_argmax", "l2_normalize", "match_keypoints",
    "mutual_nn_distance", "mutual_nn_pairs", "mutual_visible_indices",
    "nn_field", "pck", "pck_threshold", "predict_pose", "read_array",
    "read_feature_map", "read_mask", "rotate90", "rotate_mask",
    "sample_descriptor", "similarity_map", "soft_argmax",
    "split_geo_standard", "transform_features", "transform_grid_point",
    "transform_mask", "window_soft_argmax", "write_array",
    "write_feature_map", "write_mask",
]
