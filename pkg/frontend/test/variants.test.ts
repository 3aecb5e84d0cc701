import { describe, expect, it } from 'vitest';
import { RasterImage } from '../src/image.js';
import { applyVariant } from '../src/variants.js';
import { makeRaster } from './helpers.js';

function pixel(img: RasterImage, x: number, y: number): number[] {
  const p = (y * img.width + x) * 4;
  return [img.data[p], img.data[p + 1], img.data[p + 2]];
}

const img = makeRaster(3, 2, (x, y) => [x * 10, y * 10, x + y]);

describe('image-space variants', () => {
  it('identity returns the input unchanged', () => {
    expect(applyVariant(img, 'identity')).toBe(img);
  });

  it('hflip mirrors columns and is an involution', () => {
    const f = applyVariant(img, 'hflip');
    expect(f.width).toBe(3);
    expect(pixel(f, 0, 0)).toEqual(pixel(img, 2, 0));
    expect(pixel(f, 2, 1)).toEqual(pixel(img, 0, 1));
    expect(applyVariant(f, 'hflip').data).toEqual(img.data);
  });

  it('rot90 turns clockwise and swaps dimensions', () => {
    const r = applyVariant(img, 'rot90');
    expect([r.width, r.height]).toEqual([2, 3]);
    // top-left of the rotated image is the bottom-left of the original
    expect(pixel(r, 0, 0)).toEqual(pixel(img, 0, 1));
    expect(pixel(r, 1, 0)).toEqual(pixel(img, 0, 0));
    expect(pixel(r, 0, 2)).toEqual(pixel(img, 2, 1));
  });

  it('four quarter turns compose to the identity', () => {
    let r: RasterImage = img;
    for (let i = 0; i < 4; i++) r = applyVariant(r, 'rot90');
    expect([r.width, r.height]).toEqual([img.width, img.height]);
    expect(r.data).toEqual(img.data);
  });

  it('rot180 and rot270 match composed quarter turns', () => {
    const twice = applyVariant(applyVariant(img, 'rot90'), 'rot90');
    expect(applyVariant(img, 'rot180').data).toEqual(twice.data);
    const thrice = applyVariant(twice, 'rot90');
    expect(applyVariant(img, 'rot270').data).toEqual(thrice.data);
  });
});
