import { RasterImage } from '../image.js';
import { FeatureBackend } from './backend.js';

/**
 * Deterministic pixel-statistics backend for tests and offline fixtures.
 *
 * Per grid cell: mean RGB, mean signed luminance gradients, a positional
 * pair, and a constant bias, L2-normalized. The signed x-gradient makes
 * features of a mirrored image differ from mirrored features, and the
 * bias keeps every descriptor norm strictly positive, even on flat
 * images. No randomness anywhere, so re-exports are bit-identical.
 */
export class ToyBackend implements FeatureBackend {
  readonly name = 'toy';
  readonly channels = 8;
  readonly resize = null;

  extract(img: RasterImage, gridSize: number): Float32Array {
    const { width, height, data } = img;
    const lum = new Float32Array(width * height);
    for (let i = 0; i < width * height; i++) {
      lum[i] = (0.299 * data[i * 4] + 0.587 * data[i * 4 + 1] + 0.114 * data[i * 4 + 2]) / 255;
    }

    const out = new Float32Array(gridSize * gridSize * this.channels);
    for (let gy = 0; gy < gridSize; gy++) {
      const y0 = Math.floor((gy * height) / gridSize);
      const y1 = Math.max(y0 + 1, Math.floor(((gy + 1) * height) / gridSize));
      for (let gx = 0; gx < gridSize; gx++) {
        const x0 = Math.floor((gx * width) / gridSize);
        const x1 = Math.max(x0 + 1, Math.floor(((gx + 1) * width) / gridSize));

        let r = 0, g = 0, b = 0, dx = 0, dy = 0, n = 0;
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            const p = (y * width + x) * 4;
            r += data[p];
            g += data[p + 1];
            b += data[p + 2];
            const xm = Math.max(0, x - 1);
            const xp = Math.min(width - 1, x + 1);
            const ym = Math.max(0, y - 1);
            const yp = Math.min(height - 1, y + 1);
            dx += lum[y * width + xp] - lum[y * width + xm];
            dy += lum[yp * width + x] - lum[ym * width + x];
            n++;
          }
        }

        const base = (gy * gridSize + gx) * this.channels;
        out[base] = r / (255 * n);
        out[base + 1] = g / (255 * n);
        out[base + 2] = b / (255 * n);
        out[base + 3] = dx / n;
        out[base + 4] = dy / n;
        out[base + 5] = Math.sin((Math.PI * (gx + 0.5)) / gridSize);
        out[base + 6] = Math.cos((Math.PI * (gy + 0.5)) / gridSize);
        out[base + 7] = 1.0;

        let norm = 0;
        for (let c = 0; c < this.channels; c++) {
          norm += out[base + c] * out[base + c];
        }
        norm = Math.sqrt(norm);
        for (let c = 0; c < this.channels; c++) {
          out[base + c] = out[base + c] / norm;
        }
      }
    }
    return out;
  }
}
