import { VariantLabel } from './config.js';
import { RasterImage } from './image.js';

function hflip(img: RasterImage): RasterImage {
  const { width, height, data } = img;
  const out = new Uint8Array(data.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const src = (y * width + x) * 4;
      const dst = (y * width + (width - 1 - x)) * 4;
      out[dst] = data[src];
      out[dst + 1] = data[src + 1];
      out[dst + 2] = data[src + 2];
      out[dst + 3] = data[src + 3];
    }
  }
  return { width, height, data: out };
}

/** Clockwise quarter turn; width and height swap. */
function rot90(img: RasterImage): RasterImage {
  const { width, height, data } = img;
  const out = new Uint8Array(data.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const src = (y * width + x) * 4;
      // (x, y) -> (height - 1 - y, x) in the rotated frame of width `height`
      const dst = (x * height + (height - 1 - y)) * 4;
      out[dst] = data[src];
      out[dst + 1] = data[src + 1];
      out[dst + 2] = data[src + 2];
      out[dst + 3] = data[src + 3];
    }
  }
  return { width: height, height: width, data: out };
}

/**
 * Transform the image in pixel space before feature extraction. Features
 * of a flipped image are not the same thing as flipped features, so the
 * transform must happen here and never on the exported tensors.
 */
export function applyVariant(img: RasterImage, label: VariantLabel): RasterImage {
  switch (label) {
    case 'identity':
      return img;
    case 'hflip':
      return hflip(img);
    case 'rot90':
      return rot90(img);
    case 'rot180':
      return rot90(rot90(img));
    case 'rot270':
      return rot90(rot90(rot90(img)));
  }
}
