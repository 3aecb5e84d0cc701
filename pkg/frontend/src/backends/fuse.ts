import { InputError } from '../errors.js';

/**
 * Concatenate two per-location feature grids after normalizing each half.
 *
 * Follows the published recipe for joining diffusion and token features:
 * L2-normalize each source descriptor, scale the halves by alpha and
 * (1 - alpha), concatenate, then renormalize the joint descriptor.
 */
export function fuseFeatures(
  a: Float32Array, channelsA: number,
  b: Float32Array, channelsB: number,
  alpha = 0.5,
): Float32Array {
  if (!(alpha > 0 && alpha < 1)) {
    throw new InputError(`fusion weight must be in (0, 1), got ${alpha}`);
  }
  if (a.length % channelsA !== 0 || b.length % channelsB !== 0) {
    throw new InputError('feature length is not a multiple of its channel count');
  }
  const cells = a.length / channelsA;
  if (b.length / channelsB !== cells) {
    throw new InputError(
      `grids disagree: ${cells} cells vs ${b.length / channelsB}`);
  }
  const channels = channelsA + channelsB;
  const out = new Float32Array(cells * channels);
  for (let i = 0; i < cells; i++) {
    writeHalf(out, i * channels, a, i * channelsA, channelsA, alpha);
    writeHalf(out, i * channels + channelsA, b, i * channelsB, channelsB, 1 - alpha);
    let norm = 0;
    for (let c = 0; c < channels; c++) {
      norm += out[i * channels + c] * out[i * channels + c];
    }
    norm = Math.sqrt(norm);
    if (norm === 0) {
      throw new InputError(`degenerate descriptor at cell ${i}`);
    }
    for (let c = 0; c < channels; c++) {
      out[i * channels + c] /= norm;
    }
  }
  return out;
}

function writeHalf(
  out: Float32Array, dst: number,
  src: Float32Array, off: number, channels: number, weight: number,
): void {
  let norm = 0;
  for (let c = 0; c < channels; c++) {
    norm += src[off + c] * src[off + c];
  }
  norm = Math.sqrt(norm);
  if (norm === 0) {
    throw new InputError(`degenerate descriptor at offset ${off}`);
  }
  for (let c = 0; c < channels; c++) {
    out[dst + c] = (weight * src[off + c]) / norm;
  }
}
