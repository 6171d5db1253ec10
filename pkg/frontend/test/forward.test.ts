/** Hand-computed spot checks of the reference forward pass.  Every
 * expected value below was worked out on paper from the layer
 * definitions, so these fail if any geometry or reduction rule drifts
 * from the engine's semantics. */
import { describe, expect, it } from "vitest";

import { Checkpoint } from "../src/checkpoint.js";
import { ExportError } from "../src/errors.js";
import { axisGeometry, inferShapes, runForward } from "../src/forward.js";
import { normalizeLayer } from "../src/layers.js";
import { tensor } from "../src/tensor.js";
import { f32Entry, makeConvBnCheckpoint, makeDenseCheckpoint } from "./fixtures.js";

const RAMP9 = [1, 2, 3, 4, 5, 6, 7, 8, 9];

function run(ckpt: Checkpoint, shape: number[], data: number[]) {
  return runForward(ckpt, ckpt.layers.map(normalizeLayer), tensor(shape, data));
}

function convCkpt(config: Record<string, unknown>, kernel: number[], bias?: number[]): Checkpoint {
  const weights: Checkpoint["weights"] = {
    "c/kernel": f32Entry([2, 2, 1, 1], kernel),
  };
  if (bias) weights["c/bias"] = f32Entry([1], bias);
  return {
    format: "toytrain.v1",
    input_shape: [3, 3, 1],
    layers: [{ name: "c", type: "Conv2D", config: { filters: 1, kernel_size: 2, use_bias: Boolean(bias), ...config } }],
    weights,
  };
}

function poolCkpt(type: string, config: Record<string, unknown>): Checkpoint {
  return {
    format: "toytrain.v1",
    input_shape: [3, 3, 1],
    layers: [{ name: "p", type, config }],
    weights: {},
  };
}

describe("axisGeometry", () => {
  it("computes ceil(size/stride) outputs for same padding, pre-pad floor(total/2)", () => {
    expect(axisGeometry(3, 2, 1, "same", "t")).toEqual({ out: 3, padBefore: 0 });
    expect(axisGeometry(3, 2, 2, "same", "t")).toEqual({ out: 2, padBefore: 0 });
    expect(axisGeometry(5, 3, 2, "same", "t")).toEqual({ out: 3, padBefore: 1 });
    expect(axisGeometry(4, 3, 1, "same", "t")).toEqual({ out: 4, padBefore: 1 });
  });

  it("computes floor((size-k)/stride)+1 outputs for valid padding", () => {
    expect(axisGeometry(5, 3, 2, "valid", "t")).toEqual({ out: 2, padBefore: 0 });
    expect(axisGeometry(6, 2, 2, "valid", "t")).toEqual({ out: 3, padBefore: 0 });
  });

  it("rejects windows that do not fit without padding", () => {
    expect(() => axisGeometry(2, 3, 1, "valid", "small")).toThrow(/does not fit/);
  });
});

describe("convolution", () => {
  it("matches a hand-traced 2x2 same-padded kernel with bias", () => {
    // kernel picks x[y][x] + x[y+1][x+1]; out-of-bounds reads are zero
    const out = run(convCkpt({ padding: "same" }, [1, 0, 0, 1], [0.5]), [3, 3, 1], RAMP9);
    expect(out.shape).toEqual([3, 3, 1]);
    expect(Array.from(out.data)).toEqual([6.5, 8.5, 3.5, 12.5, 14.5, 6.5, 7.5, 8.5, 9.5]);
  });

  it("matches a hand-traced stride-2 same-padded kernel", () => {
    const out = run(convCkpt({ padding: "same", strides: 2 }, [1, 0, 0, 1]), [3, 3, 1], RAMP9);
    expect(out.shape).toEqual([2, 2, 1]);
    expect(Array.from(out.data)).toEqual([6, 3, 7, 9]);
  });

  it("sums across input channels", () => {
    const ckpt: Checkpoint = {
      format: "toytrain.v1",
      input_shape: [1, 1, 2],
      layers: [
        { name: "c", type: "Conv2D", config: { filters: 1, kernel_size: 1, use_bias: false } },
      ],
      weights: { "c/kernel": f32Entry([1, 1, 2, 1], [2, 0.5]) },
    };
    const out = run(ckpt, [1, 1, 2], [1, 10]);
    expect(Array.from(out.data)).toEqual([7]);
  });
});

describe("pooling", () => {
  it("max-pools over only the in-bounds window cells", () => {
    const out = run(poolCkpt("MaxPooling2D", { pool_size: 2, padding: "same" }), [3, 3, 1], RAMP9);
    expect(Array.from(out.data)).toEqual([5, 6, 8, 9]);
  });

  it("average-pools dividing by the full window area even when padded", () => {
    const out = run(
      poolCkpt("AveragePooling2D", { pool_size: 2, padding: "same" }),
      [3, 3, 1],
      RAMP9,
    );
    expect(Array.from(out.data)).toEqual([3, 2.25, 3.75, 2.25]);
  });

  it("supports overlapping valid windows via an explicit stride", () => {
    const out = run(
      poolCkpt("AveragePooling2D", { pool_size: 2, strides: 1, padding: "valid" }),
      [3, 3, 1],
      RAMP9,
    );
    expect(out.shape).toEqual([2, 2, 1]);
    expect(Array.from(out.data)).toEqual([3, 4, 6, 7]);
  });
});

describe("dense, relu, softmax, batchnorm", () => {
  it("computes x @ W + b with row-major (in, out) kernels", () => {
    const ckpt: Checkpoint = {
      format: "toytrain.v1",
      input_shape: [2],
      layers: [{ name: "fc", type: "Dense", config: { units: 3 } }],
      weights: {
        "fc/kernel": f32Entry([2, 3], [1, 2, 3, 4, 5, 6]),
        "fc/bias": f32Entry([3], [0.125, 0.25, 0.375]),
      },
    };
    const out = run(ckpt, [2], [1, 2]);
    expect(Array.from(out.data)).toEqual([9.125, 12.25, 15.375]);
  });

  it("clamps negatives to zero through ReLU", () => {
    const ckpt: Checkpoint = {
      format: "toytrain.v1",
      input_shape: [4],
      layers: [{ name: "r", type: "ReLU" }],
      weights: {},
    };
    expect(Array.from(run(ckpt, [4], [-2, -0.0, 0.5, 3]).data)).toEqual([0, 0, 0.5, 3]);
  });

  it("softmax is shift-invariant and sums to one", () => {
    const ckpt: Checkpoint = {
      format: "toytrain.v1",
      input_shape: [3],
      layers: [{ name: "s", type: "Softmax" }],
      weights: {},
    };
    const a = Array.from(run(ckpt, [3], [3, 4, 5]).data);
    const b = Array.from(run(ckpt, [3], [1003, 1004, 1005]).data);
    expect(a.reduce((s, v) => s + v, 0)).toBeCloseTo(1, 12);
    for (let i = 0; i < 3; i++) expect(a[i]).toBeCloseTo(b[i], 14);
    expect(Array.from(run(ckpt, [3], [0, 0, 0]).data)).toEqual([1 / 3, 1 / 3, 1 / 3]);
  });

  it("normalizes with running statistics per channel", () => {
    const ckpt: Checkpoint = {
      format: "toytrain.v1",
      input_shape: [1, 1, 2],
      layers: [{ name: "bn", type: "BatchNormalization" }],
      weights: {
        "bn/gamma": f32Entry([2], [2, 1]),
        "bn/beta": f32Entry([2], [1, 0]),
        "bn/moving_mean": f32Entry([2], [3, 0]),
        "bn/moving_variance": f32Entry([2], [0.249, 1]),
      },
    };
    const out = run(ckpt, [1, 1, 2], [5, -2]);
    const v = Math.fround(0.249);
    expect(out.data[0]).toBeCloseTo((2 * (5 - 3)) / Math.sqrt(v + 1e-3) + 1, 12);
    expect(out.data[1]).toBeCloseTo(-2 / Math.sqrt(1 + 1e-3), 12);
  });

  it("defaults gamma to ones and beta to zeros when absent", () => {
    const ckpt: Checkpoint = {
      format: "toytrain.v1",
      input_shape: [1, 1, 1],
      layers: [{ name: "bn", type: "BatchNormalization", config: { epsilon: 0.75 } }],
      weights: {
        "bn/moving_mean": f32Entry([1], [1]),
        "bn/moving_variance": f32Entry([1], [0.25]),
      },
    };
    // (3 - 1) / sqrt(0.25 + 0.75) = 2
    expect(Array.from(run(ckpt, [1, 1, 1], [3]).data)).toEqual([2]);
  });

  it("requires running statistics", () => {
    const ckpt: Checkpoint = {
      format: "toytrain.v1",
      input_shape: [1, 1, 1],
      layers: [{ name: "bn", type: "BatchNormalization" }],
      weights: { "bn/moving_mean": f32Entry([1], [0]) },
    };
    expect(() => run(ckpt, [1, 1, 1], [1])).toThrow(/bn\/moving_variance/);
  });
});

describe("shape inference", () => {
  it("tracks the mixed conv/pool/flatten fixture end to end", () => {
    const ckpt = makeConvBnCheckpoint();
    const shapes = inferShapes(ckpt.input_shape, ckpt.layers.map(normalizeLayer));
    expect(shapes).toEqual([
      [8, 8, 4],
      [8, 8, 4],
      [8, 8, 4],
      [4, 4, 4],
      [2, 2, 5],
      [2, 2, 5],
      [20],
      [3],
      [3],
    ]);
  });

  it("rejects conv layers fed a flat input", () => {
    const ckpt = makeConvBnCheckpoint();
    expect(() => inferShapes([64], ckpt.layers.map(normalizeLayer))).toThrow(/rank-3/);
  });
});

describe("normalizeLayer", () => {
  it("applies framework defaults", () => {
    const pool = normalizeLayer({ name: "p", type: "MaxPooling2D" });
    expect(pool).toEqual({ kind: "maxpool", name: "p", window: [2, 2], stride: 2, padding: "valid" });
    const conv = normalizeLayer({ name: "c", type: "Conv2D", config: { filters: 2, kernel_size: [1, 3] } });
    expect(conv).toMatchObject({ kernel: [1, 3], stride: 1, padding: "valid", useBias: true });
  });

  it("maps activation wrappers onto their bare layers", () => {
    expect(normalizeLayer({ name: "a", type: "Activation", config: { activation: "softmax" } }).kind).toBe("softmax");
    expect(() => normalizeLayer({ name: "a", type: "Activation", config: { activation: "tanh" } })).toThrow(
      /layer 'a': unsupported activation 'tanh'/,
    );
  });

  it("names the layer when the type is unsupported", () => {
    expect(() => normalizeLayer({ name: "drop3", type: "Dropout" })).toThrow(
      /layer 'drop3': unsupported layer type 'Dropout'/,
    );
  });

  it("rejects anisotropic strides, which the container cannot express", () => {
    expect(() =>
      normalizeLayer({ name: "c", type: "Conv2D", config: { filters: 1, kernel_size: 3, strides: [1, 2] } }),
    ).toThrow(/anisotropic strides/);
  });

  it("rejects unknown padding modes", () => {
    expect(() =>
      normalizeLayer({ name: "c", type: "Conv2D", config: { filters: 1, kernel_size: 3, padding: "full" } }),
    ).toThrow(ExportError);
  });
});

describe("runForward on full fixtures", () => {
  it("produces a probability vector from the dense fixture", () => {
    const ckpt = makeDenseCheckpoint();
    const out = run(ckpt, [6], [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    expect(out.shape).toEqual([3]);
    const total = Array.from(out.data).reduce((s, v) => s + v, 0);
    expect(total).toBeCloseTo(1, 12);
    for (const p of out.data) expect(p).toBeGreaterThan(0);
  });
});
