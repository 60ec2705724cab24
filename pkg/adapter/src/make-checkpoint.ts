/**
 * Build a seed-initialized checkpoint:
 *   node dist/make-checkpoint.js <out_dir> [--seed N] [--input-size S]
 */
import { buildModel, saveCheckpoint } from './model';

async function main(): Promise<number> {
  const args = process.argv.slice(2);
  let outDir: string | undefined;
  let seed = 1;
  let inputSize = 224;
  for (let i = 0; i < args.length; i++) {
    if (args[i] === '--seed') {
      seed = parseInt(args[++i], 10);
    } else if (args[i] === '--input-size') {
      inputSize = parseInt(args[++i], 10);
    } else if (!outDir) {
      outDir = args[i];
    }
  }
  if (!outDir) {
    console.error('usage: make-checkpoint <out_dir> [--seed N] [--input-size S]');
    return 2;
  }
  const model = buildModel(inputSize, seed);
  await saveCheckpoint(model, outDir);
  const final = model.layers.filter((l) => l.getClassName() === 'Conv2D').pop()!;
  const shape = final.outputShape as number[];
  console.log(
    `checkpoint at ${outDir}: input ${inputSize}, salience ${shape[1]}x${shape[2]}, seed ${seed}`,
  );
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  },
);
