import * as fs from 'fs';
import * as tf from '@tensorflow/tfjs';
import { PNG } from 'pngjs';

/** Decode an 8-bit PNG into an RGB [0,1] float tensor of shape [h, w, 3]. */
export function loadPng(path: string): tf.Tensor3D {
  const png = PNG.sync.read(fs.readFileSync(path));
  const { width, height, data } = png; // RGBA interleaved
  const rgb = new Float32Array(height * width * 3);
  for (let i = 0; i < height * width; i++) {
    rgb[i * 3] = data[i * 4] / 255;
    rgb[i * 3 + 1] = data[i * 4 + 1] / 255;
    rgb[i * 3 + 2] = data[i * 4 + 2] / 255;
  }
  return tf.tensor3d(rgb, [height, width, 3]);
}

/** Resize + per-channel standardization, returning a [1, size, size, 3] batch. */
export function preprocess(
  image: tf.Tensor3D,
  size: number,
  mean: number[],
  std: number[],
): tf.Tensor4D {
  return tf.tidy(() => {
    const resized =
      image.shape[0] === size && image.shape[1] === size
        ? image
        : tf.image.resizeBilinear(image, [size, size]);
    const normalized = resized.sub(tf.tensor1d(mean)).div(tf.tensor1d(std));
    return normalized.expandDims(0) as tf.Tensor4D;
  });
}
