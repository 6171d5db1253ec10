/** Reference forward pass for checkpoints, in float64.
 *
 * Semantics mirror the inference engine exactly: channels-last layout,
 * (kh, kw, in, out) convolution kernels, `same` padding computed from
 * ceil(size / stride) with the extra cell going after, max pooling over
 * the in-bounds window, average pooling dividing by the full window
 * area, and shift-by-max softmax.  Batch normalization is evaluated in
 * its unfolded form here so exports can be checked against it.
 */
import { Checkpoint, hasWeight, weightTensor } from "./checkpoint.js";
import { ExportError } from "./errors.js";
import { NormalLayer, Padding } from "./layers.js";
import { Tensor, sizeOf, tensor } from "./tensor.js";

export interface AxisGeometry {
  out: number;
  padBefore: number;
}

export function axisGeometry(
  size: number,
  k: number,
  stride: number,
  padding: Padding,
  name: string,
): AxisGeometry {
  if (padding === "valid") {
    if (size < k) {
      throw new ExportError(
        `layer '${name}': window ${k} does not fit extent ${size} without padding`,
      );
    }
    return { out: Math.floor((size - k) / stride) + 1, padBefore: 0 };
  }
  const out = Math.ceil(size / stride);
  const total = Math.max(0, (out - 1) * stride + k - size);
  return { out, padBefore: Math.floor(total / 2) };
}

function shapeOf(shape: number[], layer: NormalLayer): number[] {
  switch (layer.kind) {
    case "conv": {
      if (shape.length !== 3) {
        throw new ExportError(`layer '${layer.name}': expects a rank-3 input`);
      }
      const [h, w] = shape;
      const gy = axisGeometry(h, layer.kernel[0], layer.stride, layer.padding, layer.name);
      const gx = axisGeometry(w, layer.kernel[1], layer.stride, layer.padding, layer.name);
      return [gy.out, gx.out, layer.filters];
    }
    case "maxpool":
    case "avgpool": {
      if (shape.length !== 3) {
        throw new ExportError(`layer '${layer.name}': expects a rank-3 input`);
      }
      const [h, w, c] = shape;
      const gy = axisGeometry(h, layer.window[0], layer.stride, layer.padding, layer.name);
      const gx = axisGeometry(w, layer.window[1], layer.stride, layer.padding, layer.name);
      return [gy.out, gx.out, c];
    }
    case "dense":
      return [...shape.slice(0, -1), layer.units];
    case "flatten":
      return [sizeOf(shape)];
    case "batchnorm":
    case "relu":
    case "softmax":
      return [...shape];
  }
}

/** Shape after each layer, starting from the checkpoint input shape. */
export function inferShapes(inputShape: number[], layers: NormalLayer[]): number[][] {
  const shapes: number[][] = [];
  let shape = inputShape;
  for (const layer of layers) {
    shape = shapeOf(shape, layer);
    shapes.push(shape);
  }
  return shapes;
}

function convForward(x: Tensor, layer: NormalLayer & { kind: "conv" }, w: Tensor, b: Tensor | null): Tensor {
  const [h, wd, cin] = x.shape;
  const [kh, kw] = layer.kernel;
  const gy = axisGeometry(h, kh, layer.stride, layer.padding, layer.name);
  const gx = axisGeometry(wd, kw, layer.stride, layer.padding, layer.name);
  const cout = layer.filters;
  const out = tensor([gy.out, gx.out, cout]);
  for (let oy = 0; oy < gy.out; oy++) {
    for (let ox = 0; ox < gx.out; ox++) {
      for (let oc = 0; oc < cout; oc++) {
        let acc = b === null ? 0 : b.data[oc];
        for (let ky = 0; ky < kh; ky++) {
          const iy = oy * layer.stride - gy.padBefore + ky;
          if (iy < 0 || iy >= h) continue;
          for (let kx = 0; kx < kw; kx++) {
            const ix = ox * layer.stride - gx.padBefore + kx;
            if (ix < 0 || ix >= wd) continue;
            for (let ic = 0; ic < cin; ic++) {
              acc +=
                x.data[(iy * wd + ix) * cin + ic] *
                w.data[((ky * kw + kx) * cin + ic) * cout + oc];
            }
          }
        }
        out.data[(oy * gx.out + ox) * cout + oc] = acc;
      }
    }
  }
  return out;
}

function poolForward(x: Tensor, layer: NormalLayer & { kind: "maxpool" | "avgpool" }): Tensor {
  const [h, w, c] = x.shape;
  const [ph, pw] = layer.window;
  const gy = axisGeometry(h, ph, layer.stride, layer.padding, layer.name);
  const gx = axisGeometry(w, pw, layer.stride, layer.padding, layer.name);
  const out = tensor([gy.out, gx.out, c]);
  const area = ph * pw;
  for (let oy = 0; oy < gy.out; oy++) {
    for (let ox = 0; ox < gx.out; ox++) {
      for (let ch = 0; ch < c; ch++) {
        let best = -Infinity;
        let sum = 0;
        for (let wy = 0; wy < ph; wy++) {
          const iy = oy * layer.stride - gy.padBefore + wy;
          if (iy < 0 || iy >= h) continue;
          for (let wx = 0; wx < pw; wx++) {
            const ix = ox * layer.stride - gx.padBefore + wx;
            if (ix < 0 || ix >= w) continue;
            const v = x.data[(iy * w + ix) * c + ch];
            if (v > best) best = v;
            sum += v;
          }
        }
        out.data[(oy * gx.out + ox) * c + ch] = layer.kind === "maxpool" ? best : sum / area;
      }
    }
  }
  return out;
}

function denseForward(x: Tensor, units: number, w: Tensor, b: Tensor | null): Tensor {
  const n = x.shape[x.shape.length - 1];
  const lead = sizeOf(x.shape) / n;
  const out = tensor([...x.shape.slice(0, -1), units]);
  for (let row = 0; row < lead; row++) {
    for (let j = 0; j < units; j++) {
      let acc = b === null ? 0 : b.data[j];
      for (let i = 0; i < n; i++) {
        acc += x.data[row * n + i] * w.data[i * units + j];
      }
      out.data[row * units + j] = acc;
    }
  }
  return out;
}

function softmaxLastAxis(x: Tensor): Tensor {
  const n = x.shape[x.shape.length - 1];
  const lead = sizeOf(x.shape) / n;
  const out = tensor([...x.shape]);
  for (let row = 0; row < lead; row++) {
    let top = -Infinity;
    for (let i = 0; i < n; i++) top = Math.max(top, x.data[row * n + i]);
    let total = 0;
    for (let i = 0; i < n; i++) {
      const e = Math.exp(x.data[row * n + i] - top);
      out.data[row * n + i] = e;
      total += e;
    }
    for (let i = 0; i < n; i++) out.data[row * n + i] /= total;
  }
  return out;
}

export interface BatchNormStats {
  gamma: Tensor;
  beta: Tensor;
  mean: Tensor;
  variance: Tensor;
}

/** Load normalization statistics, defaulting gamma to ones and beta to zeros. */
export function batchNormStats(ckpt: Checkpoint, name: string, channels: number): BatchNormStats {
  for (const key of ["moving_mean", "moving_variance"]) {
    if (!hasWeight(ckpt, `${name}/${key}`)) {
      throw new ExportError(`layer '${name}': missing weight '${name}/${key}'`);
    }
  }
  const mean = weightTensor(ckpt, `${name}/moving_mean`);
  const variance = weightTensor(ckpt, `${name}/moving_variance`);
  const gamma = hasWeight(ckpt, `${name}/gamma`)
    ? weightTensor(ckpt, `${name}/gamma`)
    : tensor([channels], new Float64Array(channels).fill(1));
  const beta = hasWeight(ckpt, `${name}/beta`)
    ? weightTensor(ckpt, `${name}/beta`)
    : tensor([channels]);
  for (const [what, t] of [
    ["gamma", gamma],
    ["beta", beta],
    ["moving_mean", mean],
    ["moving_variance", variance],
  ] as const) {
    if (t.shape.length !== 1 || t.shape[0] !== channels) {
      throw new ExportError(
        `layer '${name}': ${what} has shape [${t.shape}], expected [${channels}]`,
      );
    }
  }
  return { gamma, beta, mean, variance };
}

function expectKernelShape(name: string, w: Tensor, want: number[]): void {
  if (w.shape.length !== want.length || w.shape.some((d, i) => d !== want[i])) {
    throw new ExportError(
      `layer '${name}': kernel has shape [${w.shape}], expected [${want}]`,
    );
  }
}

function kernelAndBias(
  ckpt: Checkpoint,
  name: string,
  useBias: boolean,
  kernelShape: number[],
  biasLen: number,
): { w: Tensor; b: Tensor | null } {
  const w = weightTensor(ckpt, `${name}/kernel`);
  expectKernelShape(name, w, kernelShape);
  if (!useBias) return { w, b: null };
  const b = weightTensor(ckpt, `${name}/bias`);
  if (b.shape.length !== 1 || b.shape[0] !== biasLen) {
    throw new ExportError(`layer '${name}': bias has shape [${b.shape}], expected [${biasLen}]`);
  }
  return { w, b };
}

/** Run the checkpoint forward on one input, entirely in float64. */
export function runForward(ckpt: Checkpoint, layers: NormalLayer[], input: Tensor): Tensor {
  let x = input;
  for (const layer of layers) {
    switch (layer.kind) {
      case "conv": {
        if (x.shape.length !== 3) {
          throw new ExportError(`layer '${layer.name}': expects a rank-3 input`);
        }
        const cin = x.shape[2];
        const { w, b } = kernelAndBias(
          ckpt,
          layer.name,
          layer.useBias,
          [layer.kernel[0], layer.kernel[1], cin, layer.filters],
          layer.filters,
        );
        x = convForward(x, layer, w, b);
        break;
      }
      case "dense": {
        const n = x.shape[x.shape.length - 1];
        const { w, b } = kernelAndBias(ckpt, layer.name, layer.useBias, [n, layer.units], layer.units);
        x = denseForward(x, layer.units, w, b);
        break;
      }
      case "maxpool":
      case "avgpool":
        if (x.shape.length !== 3) {
          throw new ExportError(`layer '${layer.name}': expects a rank-3 input`);
        }
        x = poolForward(x, layer);
        break;
      case "flatten":
        x = tensor([sizeOf(x.shape)], x.data.slice());
        break;
      case "relu": {
        const out = tensor([...x.shape]);
        for (let i = 0; i < x.data.length; i++) out.data[i] = Math.max(0, x.data[i]);
        x = out;
        break;
      }
      case "softmax":
        x = softmaxLastAxis(x);
        break;
      case "batchnorm": {
        const c = x.shape[x.shape.length - 1];
        const { gamma, beta, mean, variance } = batchNormStats(ckpt, layer.name, c);
        const out = tensor([...x.shape]);
        for (let i = 0; i < x.data.length; i++) {
          const ch = i % c;
          out.data[i] =
            (gamma.data[ch] * (x.data[i] - mean.data[ch])) /
              Math.sqrt(variance.data[ch] + layer.epsilon) +
            beta.data[ch];
        }
        x = out;
        break;
      }
    }
  }
  return x;
}

/** True when the final layer already produces probabilities. */
export function endsWithSoftmax(layers: NormalLayer[]): boolean {
  return layers.length > 0 && layers[layers.length - 1].kind === "softmax";
}
