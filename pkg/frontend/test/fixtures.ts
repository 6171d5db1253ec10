/** Checkpoint builders for the test suite.  Weight payloads are true
 * float32 values so container round trips are exact by construction. */
import { Buffer } from "node:buffer";

import { Checkpoint, CheckpointLayer, WeightEntry } from "../src/checkpoint.js";
import { rng } from "../src/tensor.js";

export function f32Entry(shape: number[], values: ArrayLike<number>): WeightEntry {
  const f32 = Float32Array.from(values as ArrayLike<number>);
  const buf = Buffer.alloc(f32.length * 4);
  for (let i = 0; i < f32.length; i++) buf.writeFloatLE(f32[i], i * 4);
  return { dtype: "float32", shape, data: buf.toString("base64") };
}

export function randomValues(n: number, next: () => number, lo = -0.5, hi = 0.5): Float32Array {
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.fround(lo + (hi - lo) * next());
  return out;
}

/** 6 -> Dense(4) -> ReLU -> Dense(3) -> Softmax, all weights random. */
export function makeDenseCheckpoint(seed = 11): Checkpoint {
  const next = rng(seed);
  return {
    format: "toytrain.v1",
    name: "dense-probe",
    input_shape: [6],
    layers: [
      { name: "fc1", type: "Dense", config: { units: 4 } },
      { name: "act1", type: "ReLU" },
      { name: "fc2", type: "Dense", config: { units: 3 } },
      { name: "probs", type: "Softmax" },
    ],
    weights: {
      "fc1/kernel": f32Entry([6, 4], randomValues(24, next)),
      "fc1/bias": f32Entry([4], randomValues(4, next)),
      "fc2/kernel": f32Entry([4, 3], randomValues(12, next)),
      "fc2/bias": f32Entry([3], randomValues(3, next)),
    },
  };
}

/** 8x8x1 image net with a normalization layer to fold and both paddings:
 * Conv(4,3,same,no bias) -> BatchNorm -> ReLU -> MaxPool(2) ->
 * Conv(5,3,valid) -> ReLU -> Flatten -> Dense(3) -> Softmax. */
export function makeConvBnCheckpoint(seed = 29): Checkpoint {
  const next = rng(seed);
  const variance = new Float32Array(4);
  for (let i = 0; i < 4; i++) variance[i] = Math.fround(0.3 + next());
  return {
    format: "toytrain.v1",
    name: "conv-bn-probe",
    input_shape: [8, 8, 1],
    layers: [
      {
        name: "conv1",
        type: "Conv2D",
        config: { filters: 4, kernel_size: 3, padding: "same", use_bias: false },
      },
      { name: "norm1", type: "BatchNormalization", config: { epsilon: 1e-3 } },
      { name: "act1", type: "Activation", config: { activation: "relu" } },
      { name: "pool1", type: "MaxPooling2D", config: { pool_size: 2 } },
      { name: "conv2", type: "Conv2D", config: { filters: 5, kernel_size: [3, 3] } },
      { name: "act2", type: "ReLU" },
      { name: "flat", type: "Flatten" },
      { name: "head", type: "Dense", config: { units: 3 } },
      { name: "probs", type: "Softmax" },
    ],
    weights: {
      "conv1/kernel": f32Entry([3, 3, 1, 4], randomValues(36, next)),
      "norm1/gamma": f32Entry([4], randomValues(4, next, 0.5, 1.5)),
      "norm1/beta": f32Entry([4], randomValues(4, next)),
      "norm1/moving_mean": f32Entry([4], randomValues(4, next)),
      "norm1/moving_variance": f32Entry([4], variance),
      "conv2/kernel": f32Entry([3, 3, 4, 5], randomValues(180, next)),
      "conv2/bias": f32Entry([5], randomValues(5, next)),
      "head/kernel": f32Entry([20, 3], randomValues(60, next)),
      "head/bias": f32Entry([3], randomValues(3, next)),
    },
  };
}

export function layerNamed(ckpt: Checkpoint, name: string): CheckpointLayer {
  const layer = ckpt.layers.find((l) => l.name === name);
  if (layer === undefined) throw new Error(`no fixture layer '${name}'`);
  return layer;
}
