/** Framework layer vocabulary, normalized.
 *
 * The container format stores one scalar stride per layer, so
 * anisotropic strides are rejected here rather than silently mangled.
 */
import { CheckpointLayer } from "./checkpoint.js";
import { ExportError } from "./errors.js";

export type Padding = "valid" | "same";

export interface ConvLayer {
  kind: "conv";
  name: string;
  filters: number;
  kernel: [number, number];
  stride: number;
  padding: Padding;
  useBias: boolean;
}

export interface DenseLayer {
  kind: "dense";
  name: string;
  units: number;
  useBias: boolean;
}

export interface PoolLayer {
  kind: "maxpool" | "avgpool";
  name: string;
  window: [number, number];
  stride: number;
  padding: Padding;
}

export interface BatchNormLayer {
  kind: "batchnorm";
  name: string;
  epsilon: number;
}

export interface SimpleLayer {
  kind: "relu" | "flatten" | "softmax";
  name: string;
}

export type NormalLayer = ConvLayer | DenseLayer | PoolLayer | BatchNormLayer | SimpleLayer;

function pair(v: unknown, what: string, name: string): [number, number] {
  if (typeof v === "number" && Number.isInteger(v) && v > 0) return [v, v];
  if (
    Array.isArray(v) &&
    v.length === 2 &&
    v.every((n) => Number.isInteger(n) && n > 0)
  ) {
    return [v[0], v[1]];
  }
  throw new ExportError(`layer '${name}': bad ${what} ${JSON.stringify(v)}`);
}

function scalarStride(v: unknown, name: string, fallback: [number, number]): number {
  const [sh, sw] = v === undefined ? fallback : pair(v, "strides", name);
  if (sh !== sw) {
    throw new ExportError(
      `layer '${name}': anisotropic strides [${sh}, ${sw}] are not exportable`,
    );
  }
  return sh;
}

function paddingOf(v: unknown, name: string): Padding {
  const p = v === undefined ? "valid" : v;
  if (p === "valid" || p === "same") return p;
  throw new ExportError(`layer '${name}': unknown padding '${String(p)}'`);
}

export function normalizeLayer(layer: CheckpointLayer): NormalLayer {
  const cfg = layer.config ?? {};
  const name = layer.name;
  switch (layer.type) {
    case "Conv2D": {
      const filters = cfg.filters;
      if (!Number.isInteger(filters) || (filters as number) < 1) {
        throw new ExportError(`layer '${name}': bad filters ${JSON.stringify(filters)}`);
      }
      return {
        kind: "conv",
        name,
        filters: filters as number,
        kernel: pair(cfg.kernel_size, "kernel_size", name),
        stride: scalarStride(cfg.strides, name, [1, 1]),
        padding: paddingOf(cfg.padding, name),
        useBias: cfg.use_bias !== false,
      };
    }
    case "Dense": {
      const units = cfg.units;
      if (!Number.isInteger(units) || (units as number) < 1) {
        throw new ExportError(`layer '${name}': bad units ${JSON.stringify(units)}`);
      }
      return { kind: "dense", name, units: units as number, useBias: cfg.use_bias !== false };
    }
    case "MaxPooling2D":
    case "AveragePooling2D": {
      const window = cfg.pool_size === undefined ? ([2, 2] as [number, number])
        : pair(cfg.pool_size, "pool_size", name);
      return {
        kind: layer.type === "MaxPooling2D" ? "maxpool" : "avgpool",
        name,
        window,
        stride: scalarStride(cfg.strides, name, window),
        padding: paddingOf(cfg.padding, name),
      };
    }
    case "BatchNormalization": {
      const eps = cfg.epsilon === undefined ? 1e-3 : cfg.epsilon;
      if (typeof eps !== "number" || !(eps > 0)) {
        throw new ExportError(`layer '${name}': bad epsilon ${JSON.stringify(eps)}`);
      }
      return { kind: "batchnorm", name, epsilon: eps };
    }
    case "ReLU":
      return { kind: "relu", name };
    case "Flatten":
      return { kind: "flatten", name };
    case "Softmax":
      return { kind: "softmax", name };
    case "Activation": {
      if (cfg.activation === "relu") return { kind: "relu", name };
      if (cfg.activation === "softmax") return { kind: "softmax", name };
      throw new ExportError(
        `layer '${name}': unsupported activation '${String(cfg.activation)}'`,
      );
    }
    default:
      throw new ExportError(`layer '${name}': unsupported layer type '${layer.type}'`);
  }
}
