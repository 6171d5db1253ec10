/** Reader for toytrain checkpoints (format tag "toytrain.v1").
 *
 * A checkpoint is one JSON file: a sequential layer list in framework
 * vocabulary (Conv2D / Dense / BatchNormalization / pooling / Flatten /
 * ReLU / Softmax / Activation) plus named base64 float32 weight arrays
 * ("<layer>/kernel", "<layer>/bias", batch-norm gamma/beta/moving_mean/
 * moving_variance). Kernels are (kh, kw, in, out), dense kernels
 * (in, out), images (rows, cols, channels).
 */
import { readFileSync } from "node:fs";

import { ExportError } from "./errors.js";
import { Tensor, sizeOf, tensor } from "./tensor.js";

export const CHECKPOINT_FORMAT = "toytrain.v1";

export interface WeightEntry {
  dtype: string;
  shape: number[];
  data: string; // base64, little-endian float32
}

export interface CheckpointLayer {
  name: string;
  type: string;
  config?: Record<string, unknown>;
}

export interface Checkpoint {
  format: string;
  name?: string;
  input_shape: number[];
  layers: CheckpointLayer[];
  weights: Record<string, WeightEntry>;
}

function isShape(v: unknown): v is number[] {
  return Array.isArray(v) && v.length > 0 && v.every((n) => Number.isInteger(n) && n > 0);
}

export function parseCheckpoint(text: string): Checkpoint {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (e) {
    throw new ExportError(`checkpoint is not valid JSON: ${(e as Error).message}`);
  }
  const ckpt = raw as Checkpoint;
  if (typeof ckpt !== "object" || ckpt === null) {
    throw new ExportError("checkpoint must be a JSON object");
  }
  if (ckpt.format !== CHECKPOINT_FORMAT) {
    throw new ExportError(
      `unsupported checkpoint format '${ckpt.format}', expected '${CHECKPOINT_FORMAT}'`,
    );
  }
  if (!isShape(ckpt.input_shape)) {
    throw new ExportError(`bad input_shape ${JSON.stringify(ckpt.input_shape)}`);
  }
  if (!Array.isArray(ckpt.layers) || ckpt.layers.length === 0) {
    throw new ExportError("checkpoint has no layers");
  }
  const seen = new Set<string>();
  for (const layer of ckpt.layers) {
    if (typeof layer.name !== "string" || !layer.name) {
      throw new ExportError("every layer needs a non-empty name");
    }
    if (seen.has(layer.name)) {
      throw new ExportError(`duplicate layer name '${layer.name}'`);
    }
    seen.add(layer.name);
    if (typeof layer.type !== "string") {
      throw new ExportError(`layer '${layer.name}' has no type`);
    }
  }
  if (typeof ckpt.weights !== "object" || ckpt.weights === null) {
    throw new ExportError("checkpoint has no weights table");
  }
  return ckpt;
}

export function loadCheckpoint(path: string): Checkpoint {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (e) {
    throw new ExportError(`cannot read checkpoint '${path}': ${(e as Error).message}`);
  }
  return parseCheckpoint(text);
}

/** Decode one named weight array; float32 payload lengths are checked. */
export function weightTensor(ckpt: Checkpoint, key: string): Tensor {
  const entry = ckpt.weights[key];
  if (entry === undefined) {
    throw new ExportError(`checkpoint is missing weight '${key}'`);
  }
  if (entry.dtype !== "float32") {
    throw new ExportError(`weight '${key}' has dtype '${entry.dtype}', expected float32`);
  }
  if (!isShape(entry.shape)) {
    throw new ExportError(`weight '${key}' has a bad shape`);
  }
  const bytes = Buffer.from(entry.data, "base64");
  const expected = sizeOf(entry.shape) * 4;
  if (bytes.length !== expected) {
    throw new ExportError(
      `weight '${key}' payload is ${bytes.length} bytes, shape implies ${expected}`,
    );
  }
  // explicit little-endian reads; Buffer pool offsets are not 4-aligned
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.length);
  const out = tensor(entry.shape);
  for (let i = 0; i < out.data.length; i++) {
    out.data[i] = view.getFloat32(i * 4, true);
  }
  return out;
}

export function hasWeight(ckpt: Checkpoint, key: string): boolean {
  return ckpt.weights[key] !== undefined;
}
