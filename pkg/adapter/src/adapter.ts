import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';

import { AdapterConfig } from './config';
import { createExtractor } from './gradcam';
import { loadPng, preprocess } from './image';
import { loadCheckpoint } from './model';
import { encodeSalm } from './salm';

interface JobRequest {
  sample_id: string;
  image: string;
  variant_tag: string;
}

interface JobManifest {
  job_id: string;
  run_id: string;
  requests: JobRequest[];
}

interface ResultRow {
  sample_id: string;
  variant_tag: string;
  status: 'ok' | 'failed';
  salience?: string;
  score?: number;
  reason?: string;
}

/**
 * Answer one provider job: for every request, run inference, extract the
 * Grad-CAM of the predicted class at the target layer, write it as SALM at
 * the feature map's native resolution, and report the synthetic-class
 * softmax probability. Results land in `out/` next to the job manifest.
 */
export async function serveJob(jobManifestPath: string, config: AdapterConfig): Promise<string> {
  const manifestPath = path.resolve(jobManifestPath);
  const job: JobManifest = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'));
  const imagesDir = path.dirname(manifestPath);
  const outDir = path.join(imagesDir, 'out');
  fs.mkdirSync(outDir, { recursive: true });

  const model = await loadCheckpoint(config.checkpoint_path);
  const extractor = createExtractor(model, config.target_layer);
  const { mean, std } = config.normalization;

  const results: ResultRow[] = [];
  for (const req of job.requests) {
    const row: ResultRow = {
      sample_id: req.sample_id,
      variant_tag: req.variant_tag,
      status: 'failed',
    };
    try {
      const image = loadPng(path.join(imagesDir, req.image));
      const input = preprocess(image, config.input_size, mean, std);
      image.dispose();
      const cam = extractor.run(input);
      input.dispose();
      const salmName = `${req.sample_id}__${req.variant_tag.replace(/[:/]/g, '_')}.salm`;
      fs.writeFileSync(
        path.join(outDir, salmName),
        encodeSalm({ height: cam.height, width: cam.width, values: cam.map }),
      );
      row.status = 'ok';
      row.salience = salmName;
      row.score = cam.probabilities[config.synthetic_class_index];
    } catch (err) {
      row.reason = err instanceof Error ? err.message : String(err);
    }
    results.push(row);
  }
  model.dispose();

  const resultDoc = {
    job_id: job.job_id,
    results,
    config_echo: {
      architecture_id: config.architecture_id,
      checkpoint_path: config.checkpoint_path,
      target_layer: config.target_layer ?? 'final convolutional layer',
      input_size: config.input_size,
      normalization: config.normalization,
      synthetic_class_index: config.synthetic_class_index,
    },
  };
  const resultPath = path.join(outDir, 'result.json');
  fs.writeFileSync(resultPath, JSON.stringify(resultDoc, null, 1));
  return resultPath;
}
