import { InputError } from './errors.js';

export type ModelKind = 'toy' | 'dino' | 'fused';

export type VariantLabel = 'identity' | 'hflip' | 'rot90' | 'rot180' | 'rot270';

export const VARIANT_LABELS: readonly VariantLabel[] = [
  'identity', 'hflip', 'rot90', 'rot180', 'rot270',
];

export interface ExportConfig {
  model: ModelKind;
  /** output feature grid is gridSize x gridSize */
  gridSize: number;
  variants: VariantLabel[];
  /** square resize applied before the diffusion branch */
  sdResize: number;
  /** square resize applied before the token branch */
  dinoResize: number;
  /** decoder layers tapped in the diffusion branch */
  sdLayers: number[];
  sdTimestep: number;
  /** transformer layer whose tokens the token branch reads */
  dinoLayer: number;
  /** directory holding model weights for the real backends */
  weightsDir?: string;
  /** channel count of the toy backend */
  toyChannels: number;
}

export const DEFAULT_CONFIG: ExportConfig = {
  model: 'toy',
  gridSize: 60,
  variants: ['identity'],
  sdResize: 960,
  dinoResize: 840,
  sdLayers: [2, 5, 8],
  sdTimestep: 50,
  dinoLayer: 11,
  toyChannels: 8,
};

export function resolveConfig(overrides: Partial<ExportConfig>): ExportConfig {
  const cfg = { ...DEFAULT_CONFIG, ...overrides };
  if (!Number.isInteger(cfg.gridSize) || cfg.gridSize < 1) {
    throw new InputError(`grid size must be a positive integer, got ${cfg.gridSize}`);
  }
  if (cfg.variants.length === 0) {
    throw new InputError('variant list is empty');
  }
  for (const v of cfg.variants) {
    if (!VARIANT_LABELS.includes(v)) {
      throw new InputError(`unknown variant ${JSON.stringify(v)}`);
    }
  }
  if (new Set(cfg.variants).size !== cfg.variants.length) {
    throw new InputError('variant list has duplicates');
  }
  return cfg;
}
