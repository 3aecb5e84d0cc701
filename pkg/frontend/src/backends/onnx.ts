import { existsSync } from 'fs';
import { join } from 'path';
import { ExportConfig } from '../config.js';
import { ModelLoadError } from '../errors.js';
import { FeatureBackend } from './backend.js';

const MODEL_FILES: Record<string, string[]> = {
  dino: ['dino.onnx'],
  fused: ['dino.onnx', 'sd_unet.onnx'],
};

/**
 * Real-model path over local ONNX weights. Every precondition is checked
 * up front - weights directory, weight files, runtime package - so a bad
 * setup fails with one clear message. Graph execution itself is not
 * implemented in this build; exports that need real features must run
 * where the full runtime is wired up, and fixtures use the toy backend.
 */
export async function loadOnnxBackend(cfg: ExportConfig): Promise<FeatureBackend> {
  if (!cfg.weightsDir) {
    throw new ModelLoadError(
      `model '${cfg.model}' needs --weights-dir pointing at its ONNX files`);
  }
  for (const f of MODEL_FILES[cfg.model] ?? []) {
    const p = join(cfg.weightsDir, f);
    if (!existsSync(p)) {
      throw new ModelLoadError(`model weights not found: ${p}`);
    }
  }
  // optional dependency: resolved dynamically so installs without the
  // runtime still build and run the toy path
  const runtime = 'onnxruntime-node';
  try {
    await import(runtime);
  } catch {
    throw new ModelLoadError(
      `the '${runtime}' package is not installed; it is required for real-model export`);
  }
  throw new ModelLoadError(
    `model '${cfg.model}': weights and runtime found, but graph execution is not ` +
    'implemented in this build');
}
