import { mkdirSync } from 'fs';
import { writeFileSync } from 'fs';
import { basename, extname, join } from 'path';
import { FeatureBackend } from './backends/backend.js';
import { loadOnnxBackend } from './backends/onnx.js';
import { ToyBackend } from './backends/toy.js';
import { ExportConfig, resolveConfig } from './config.js';
import { InputError } from './errors.js';
import { loadPng, resizeBilinear } from './image.js';
import { writeNpy } from './npy.js';
import { applyVariant } from './variants.js';

export interface ExportedImage {
  width: number;
  height: number;
  files: Record<string, string>;
}

export interface ExportManifest {
  model: string;
  grid: [number, number];
  channels: number;
  variants: string[];
  images: Record<string, ExportedImage>;
}

export async function loadBackend(cfg: ExportConfig): Promise<FeatureBackend> {
  if (cfg.model === 'toy') {
    return new ToyBackend();
  }
  return loadOnnxBackend(cfg);
}

function imageId(path: string): string {
  const id = basename(path, extname(path));
  if (!id) {
    throw new InputError(`cannot derive an image id from ${path}`);
  }
  return id;
}

/**
 * Export one feature file per image and variant, named
 * `<image-id>__<variant>.npy`, plus a manifest describing the batch.
 * Variants transform the image in pixel space before extraction.
 */
export async function exportFeatures(
  imagePaths: string[],
  overrides: Partial<ExportConfig>,
  outDir: string,
): Promise<ExportManifest> {
  const cfg = resolveConfig(overrides);
  if (imagePaths.length === 0) {
    throw new InputError('no images to export');
  }
  const backend = await loadBackend(cfg);
  mkdirSync(outDir, { recursive: true });

  const images: Record<string, ExportedImage> = {};
  for (const path of imagePaths) {
    const id = imageId(path);
    if (id in images) {
      throw new InputError(`duplicate image id '${id}' (from ${path})`);
    }
    const raster = loadPng(path);
    const files: Record<string, string> = {};
    for (const variant of cfg.variants) {
      let img = applyVariant(raster, variant);
      if (backend.resize !== null) {
        img = resizeBilinear(img, backend.resize);
      }
      const feats = backend.extract(img, cfg.gridSize);
      for (let i = 0; i < feats.length; i++) {
        if (!Number.isFinite(feats[i])) {
          throw new InputError(`${id}/${variant}: non-finite feature value`);
        }
      }
      const name = `${id}__${variant}.npy`;
      writeNpy(join(outDir, name), [cfg.gridSize, cfg.gridSize, backend.channels], feats);
      files[variant] = name;
    }
    images[id] = { width: raster.width, height: raster.height, files };
  }

  const manifest: ExportManifest = {
    model: backend.name,
    grid: [cfg.gridSize, cfg.gridSize],
    channels: backend.channels,
    variants: [...cfg.variants],
    images,
  };
  writeFileSync(join(outDir, 'features_manifest.json'),
    stableJson(manifest) + '\n');
  return manifest;
}

/** JSON with sorted keys so re-exports are byte-identical. */
export function stableJson(value: unknown): string {
  return JSON.stringify(sortKeys(value));
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(sortKeys);
  }
  if (value !== null && typeof value === 'object') {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value).sort()) {
      out[key] = sortKeys((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}
