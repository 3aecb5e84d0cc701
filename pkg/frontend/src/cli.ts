#!/usr/bin/env node
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { ModelKind, VariantLabel } from './config.js';
import { InputError, ModelLoadError } from './errors.js';
import { exportFeatures } from './export.js';

async function run(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .scriptName('feature-export')
    .usage('$0 --out-dir DIR [options] <images...>')
    .command('$0 <images...>', 'export feature grids for images', (y) =>
      y.positional('images', { type: 'string', array: true, demandOption: true }))
    .option('out-dir', { type: 'string', demandOption: true, describe: 'output directory' })
    .option('model', {
      type: 'string', default: 'toy', choices: ['toy', 'dino', 'fused'],
      describe: 'feature backend',
    })
    .option('variants', {
      type: 'string', default: 'identity',
      describe: 'comma list of image-space variants',
    })
    .option('grid', { type: 'number', default: 60, describe: 'output grid size' })
    .option('weights-dir', { type: 'string', describe: 'directory with ONNX weights' })
    .strict()
    .fail((msg, err) => { throw err ?? new InputError(msg); })
    .parse();

  const manifest = await exportFeatures(
    (args.images as string[]).map(String),
    {
      model: args.model as ModelKind,
      gridSize: args.grid,
      variants: args.variants.split(',').map((v) => v.trim()) as VariantLabel[],
      weightsDir: args.weightsDir,
    },
    args.outDir,
  );
  const nFiles = Object.values(manifest.images)
    .reduce((n, im) => n + Object.keys(im.files).length, 0);
  console.log(
    `exported ${nFiles} feature files for ${Object.keys(manifest.images).length} ` +
    `images to ${args.outDir}`);
  return 0;
}

run(hideBin(process.argv))
  .then((code) => process.exit(code))
  .catch((err) => {
    if (err instanceof InputError) {
      console.error(`error: ${err.message}`);
      process.exit(2);
    }
    if (err instanceof ModelLoadError) {
      console.error(`model load failure: ${err.message}`);
      process.exit(3);
    }
    console.error(err);
    process.exit(1);
  });
