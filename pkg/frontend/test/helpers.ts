import { writeFileSync } from 'fs';
import { PNG } from 'pngjs';
import { RasterImage } from '../src/image.js';

export type Painter = (x: number, y: number) => [number, number, number];

/** Deterministic synthetic raster; painter returns RGB for a pixel. */
export function makeRaster(width: number, height: number, paint: Painter): RasterImage {
  const data = new Uint8Array(width * height * 4);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = paint(x, y);
      const p = (y * width + x) * 4;
      data[p] = r;
      data[p + 1] = g;
      data[p + 2] = b;
      data[p + 3] = 255;
    }
  }
  return { width, height, data };
}

export function writePng(path: string, img: RasterImage): void {
  const png = new PNG({ width: img.width, height: img.height });
  Buffer.from(img.data).copy(png.data);
  writeFileSync(path, PNG.sync.write(png));
}

/** Smooth color ramps plus a bright blob make features content-sensitive. */
export function gradientPainter(seed: number): Painter {
  return (x, y) => {
    const blob = Math.exp(-((x - 20 - seed) ** 2 + (y - 15) ** 2) / 50);
    return [
      Math.round(255 * Math.min(1, x / 60 + blob)),
      Math.round(255 * Math.min(1, y / 50)),
      (seed * 37 + x + 2 * y) % 256,
    ];
  };
}
