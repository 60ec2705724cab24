import * as fs from 'fs';

export const CONFIG_ENV = 'SALIENCE_ADAPTER_CONFIG';

export interface AdapterConfig {
  checkpoint_path: string;
  architecture_id: string;
  target_layer?: string; // default: final convolutional layer
  device: string;
  input_size: number;
  normalization: { mean: number[]; std: number[] };
  synthetic_class_index: number;
}

export const DEFAULTS = {
  architecture_id: 'tiny-cnn',
  device: 'cpu',
  input_size: 224,
  normalization: { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] },
  synthetic_class_index: 1,
};

export function loadConfig(pathArg?: string): AdapterConfig {
  const configPath = pathArg ?? process.env[CONFIG_ENV];
  if (!configPath) {
    throw new Error(`adapter config required: pass --config <path> or set ${CONFIG_ENV}`);
  }
  const doc = JSON.parse(fs.readFileSync(configPath, 'utf-8'));
  if (!doc.checkpoint_path) {
    throw new Error('adapter config needs checkpoint_path');
  }
  return {
    checkpoint_path: doc.checkpoint_path,
    architecture_id: doc.architecture_id ?? DEFAULTS.architecture_id,
    target_layer: doc.target_layer,
    device: doc.device ?? DEFAULTS.device,
    input_size: doc.input_size ?? DEFAULTS.input_size,
    normalization: doc.normalization ?? DEFAULTS.normalization,
    synthetic_class_index: doc.synthetic_class_index ?? DEFAULTS.synthetic_class_index,
  };
}
