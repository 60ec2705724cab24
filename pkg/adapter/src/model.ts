import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';

/**
 * Small seed-initialized binary CNN whose final convolution sits on a 7x7
 * feature map (input sizes of 7 * 2^k). Class 1 is the synthetic class.
 */
export function buildModel(inputSize: number, seed: number): tf.LayersModel {
  if (inputSize < 14 || (inputSize / 7) % 1 !== 0 || Math.log2(inputSize / 7) % 1 !== 0) {
    throw new Error(`input size must be 7 * 2^k with k >= 1, got ${inputSize}`);
  }
  const halvings = Math.log2(inputSize / 7);
  const model = tf.sequential();
  const channels = [8, 16, 32, 32, 64];
  for (let i = 0; i < halvings; i++) {
    const filters = channels[Math.min(i, channels.length - 1)];
    model.add(
      tf.layers.conv2d({
        inputShape: i === 0 ? [inputSize, inputSize, 3] : undefined,
        filters,
        kernelSize: 3,
        padding: 'same',
        activation: 'relu',
        kernelInitializer: tf.initializers.glorotUniform({ seed: seed + i }),
        biasInitializer: 'zeros',
        name: `conv_${i}`,
      }),
    );
    model.add(tf.layers.maxPooling2d({ poolSize: 2, name: `pool_${i}` }));
  }
  model.add(
    tf.layers.conv2d({
      filters: 32,
      kernelSize: 3,
      padding: 'same',
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 100 }),
      biasInitializer: 'zeros',
      name: 'final_conv',
    }),
  );
  model.add(tf.layers.globalAveragePooling2d({ name: 'gap' }));
  model.add(
    tf.layers.dense({
      units: 2,
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 200 }),
      biasInitializer: 'zeros',
      name: 'logits',
    }),
  );
  return model;
}

/** Save as a two-file checkpoint: model.json (topology + weight specs) + weights.bin. */
export async function saveCheckpoint(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const manifest = {
        format: 'salience-gradcam-checkpoint',
        modelTopology: artifacts.modelTopology,
        weightSpecs: artifacts.weightSpecs,
      };
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(manifest));
      fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(artifacts.weightData as ArrayBuffer));
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } };
    }),
  );
}

export async function loadCheckpoint(dir: string): Promise<tf.LayersModel> {
  const manifestPath = path.join(dir, 'model.json');
  if (!fs.existsSync(manifestPath)) {
    throw new Error(`no checkpoint at ${dir}`);
  }
  const manifest = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'));
  const weights = fs.readFileSync(path.join(dir, 'weights.bin'));
  const weightData = weights.buffer.slice(weights.byteOffset, weights.byteOffset + weights.byteLength);
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: manifest.modelTopology,
      weightSpecs: manifest.weightSpecs,
      weightData,
    }),
  );
}

/** The last Conv2D layer; its spatial dims are the native salience resolution. */
export function findTargetLayer(model: tf.LayersModel, name?: string): tf.layers.Layer {
  if (name) {
    return model.getLayer(name);
  }
  const convs = model.layers.filter((l) => l.getClassName() === 'Conv2D');
  if (convs.length === 0) {
    throw new Error('model has no Conv2D layer to take salience from');
  }
  return convs[convs.length - 1];
}
