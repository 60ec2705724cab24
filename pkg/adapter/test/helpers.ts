import * as fs from 'fs';
import * as path from 'path';
import { PNG } from 'pngjs';

/** Deterministic xorshift PRNG so fixture images are stable across runs. */
export function makeRng(seed: number): () => number {
  let state = seed >>> 0 || 1;
  return () => {
    state ^= state << 13;
    state ^= state >>> 17;
    state ^= state << 5;
    state >>>= 0;
    return state / 0xffffffff;
  };
}

/** Random RGB PNG with an optional center brightness bump. */
export function writeTestPng(
  filePath: string,
  size: number,
  rng: () => number,
  centerBoost = 0,
): void {
  const png = new PNG({ width: size, height: size });
  const center = (size - 1) / 2;
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const d2 = (y - center) ** 2 + (x - center) ** 2;
      const bump = centerBoost * Math.exp(-d2 / (2 * (size / 5) ** 2));
      const idx = (y * size + x) * 4;
      for (let c = 0; c < 3; c++) {
        png.data[idx + c] = Math.min(255, Math.round(rng() * 160 + bump * 255));
      }
      png.data[idx + 3] = 255;
    }
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, PNG.sync.write(png));
}

export interface JobSpec {
  jobId: string;
  runId: string;
  imagesDir: string;
  requests: { sample_id: string; image: string; variant_tag: string }[];
}

export function writeJobManifest(spec: JobSpec): string {
  const manifestPath = path.join(spec.imagesDir, 'job.json');
  fs.writeFileSync(
    manifestPath,
    JSON.stringify({ job_id: spec.jobId, run_id: spec.runId, requests: spec.requests }),
  );
  return manifestPath;
}
