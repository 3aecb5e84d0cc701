export { DEFAULT_CONFIG, resolveConfig, VARIANT_LABELS } from './config.js';
export type { ExportConfig, ModelKind, VariantLabel } from './config.js';
export { InputError, ModelLoadError } from './errors.js';
export { loadPng, resizeBilinear } from './image.js';
export type { RasterImage } from './image.js';
export { npyBytes, readNpy, writeNpy } from './npy.js';
export type { NpyTensor } from './npy.js';
export { applyVariant } from './variants.js';
export type { FeatureBackend } from './backends/backend.js';
export { ToyBackend } from './backends/toy.js';
export { fuseFeatures } from './backends/fuse.js';
export { loadOnnxBackend } from './backends/onnx.js';
export { exportFeatures, loadBackend, stableJson } from './export.js';
export type { ExportManifest, ExportedImage } from './export.js';
