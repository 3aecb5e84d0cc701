import { RasterImage } from '../image.js';

export interface FeatureBackend {
  readonly name: string;
  readonly channels: number;
  /** square resize applied before extract, or null to keep native size */
  readonly resize: number | null;
  /**
   * Produce a gridSize x gridSize x channels tensor, row-major, one
   * L2-normalized descriptor per grid location.
   */
  extract(img: RasterImage, gridSize: number): Float32Array;
}
