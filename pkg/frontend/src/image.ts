import { readFileSync } from 'fs';
import { PNG } from 'pngjs';
import { InputError } from './errors.js';

/** Decoded raster: tightly packed RGBA rows, top-left origin. */
export interface RasterImage {
  width: number;
  height: number;
  data: Uint8Array;
}

export function loadPng(path: string): RasterImage {
  let raw: Buffer;
  try {
    raw = readFileSync(path);
  } catch {
    throw new InputError(`cannot read image: ${path}`);
  }
  let png: PNG;
  try {
    png = PNG.sync.read(raw);
  } catch (e) {
    throw new InputError(`${path}: not a valid PNG (${(e as Error).message})`);
  }
  return { width: png.width, height: png.height, data: new Uint8Array(png.data) };
}

/**
 * Bilinear resize to a square target. The real-model branches resize
 * before extraction; the toy backend pools at native resolution.
 */
export function resizeBilinear(img: RasterImage, size: number): RasterImage {
  if (size === img.width && size === img.height) return img;
  const out = new Uint8Array(size * size * 4);
  for (let y = 0; y < size; y++) {
    const sy = ((y + 0.5) * img.height) / size - 0.5;
    const y0 = Math.max(0, Math.floor(sy));
    const y1 = Math.min(img.height - 1, y0 + 1);
    const fy = Math.min(1, Math.max(0, sy - y0));
    for (let x = 0; x < size; x++) {
      const sx = ((x + 0.5) * img.width) / size - 0.5;
      const x0 = Math.max(0, Math.floor(sx));
      const x1 = Math.min(img.width - 1, x0 + 1);
      const fx = Math.min(1, Math.max(0, sx - x0));
      for (let c = 0; c < 4; c++) {
        const p00 = img.data[(y0 * img.width + x0) * 4 + c];
        const p01 = img.data[(y0 * img.width + x1) * 4 + c];
        const p10 = img.data[(y1 * img.width + x0) * 4 + c];
        const p11 = img.data[(y1 * img.width + x1) * 4 + c];
        const top = p00 + (p01 - p00) * fx;
        const bot = p10 + (p11 - p10) * fx;
        out[(y * size + x) * 4 + c] = Math.round(top + (bot - top) * fy);
      }
    }
  }
  return { width: size, height: size, data: out };
}
