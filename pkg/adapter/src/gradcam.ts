import * as tf from '@tensorflow/tfjs';
import { findTargetLayer } from './model';

export interface GradCamResult {
  map: Float32Array; // row-major, featureHeight x featureWidth, >= 0
  height: number;
  width: number;
  predictedClass: number;
  probabilities: number[]; // softmax over all classes
}

export interface GradCamExtractor {
  run(input: tf.Tensor4D): GradCamResult;
  mapShape: [number, number];
}

/**
 * Grad-CAM of the predicted class at the target convolutional layer:
 * channel weights are the spatial means of d(logit_pred)/d(activation),
 * the map is the ReLU of the weighted channel sum, written raw (never
 * normalized, never upsampled).
 */
export function createExtractor(model: tf.LayersModel, targetLayerName?: string): GradCamExtractor {
  const target = findTargetLayer(model, targetLayerName);
  const backbone = tf.model({ inputs: model.inputs, outputs: target.output as tf.SymbolicTensor });
  const targetIndex = model.layers.indexOf(target);
  const headLayers = model.layers.slice(targetIndex + 1);
  const shape = (target.output as tf.SymbolicTensor).shape; // [null, h, w, c]
  const mapShape: [number, number] = [shape[1] as number, shape[2] as number];

  const head = (activation: tf.Tensor): tf.Tensor2D => {
    let x: tf.Tensor = activation;
    for (const layer of headLayers) {
      x = layer.apply(x) as tf.Tensor;
    }
    return x as tf.Tensor2D; // [1, numClasses] logits
  };

  const run = (input: tf.Tensor4D): GradCamResult => {
    const [mapBuf, predictedClass, probabilities] = tf.tidy(() => {
      const activation = backbone.predict(input) as tf.Tensor4D;
      const logits = head(activation);
      const probs = tf.softmax(logits).squeeze() as tf.Tensor1D;
      const pred = (logits.argMax(-1).dataSync() as Int32Array)[0];

      const classScore = (a: tf.Tensor) =>
        head(a).slice([0, pred], [1, 1]).sum();
      const grads = tf.grad(classScore)(activation); // [1, h, w, c]
      const weights = grads.mean([1, 2]); // [1, c]
      const weighted = activation.mul(weights.reshape([1, 1, 1, -1]));
      const cam = tf.relu(weighted.sum(-1)).squeeze(); // [h, w]
      return [
        cam.dataSync() as Float32Array,
        pred,
        Array.from(probs.dataSync() as Float32Array),
      ] as const;
    });
    return {
      map: Float32Array.from(mapBuf),
      height: mapShape[0],
      width: mapShape[1],
      predictedClass,
      probabilities,
    };
  };

  return { run, mapShape };
}
