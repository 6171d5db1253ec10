/** Checkpoint-to-container exporter.
 *
 * The container is assembled entirely in memory — manifest bytes, blob
 * bytes, checksum — before anything touches the filesystem, so a failed
 * export never leaves a partial model behind.  Batch normalization is
 * folded into a per-channel affine layer; everything else maps one to
 * one.  The export is then verified numerically by running the installed
 * engine on random probes and comparing against the float64 reference
 * forward pass, rather than trusting the structural mapping alone.
 */
import { Buffer } from "node:buffer";
import { writeFileSync } from "node:fs";

import { canonicalJson, Json } from "./canonical.js";
import { Checkpoint, loadCheckpoint, weightTensor } from "./checkpoint.js";
import { crc32 } from "./crc32.js";
import { ExportError } from "./errors.js";
import { batchNormStats, inferShapes } from "./forward.js";
import { NormalLayer, normalizeLayer } from "./layers.js";
import { Tensor, randomTensor, rng } from "./tensor.js";
import { verifyRoundtrip } from "./verify.js";

export interface LayerMapping {
  source: string;
  sourceType: string;
  target: string;
  targetKind: string;
  note: string;
}

export interface ExportReport {
  mapping: LayerMapping[];
  parameterCount: number;
  probeCount: number;
  maxDeviation: number;
}

interface BuiltArray {
  shape: number[];
  f32: Float32Array;
}

interface BuiltLayer {
  id: string;
  kind: string;
  params: { [key: string]: Json };
  inputs: string[];
  weight: BuiltArray | null;
  bias: BuiltArray | null;
}

function toF32(t: Tensor): BuiltArray {
  const f32 = new Float32Array(t.data.length);
  for (let i = 0; i < f32.length; i++) f32[i] = Math.fround(t.data[i]);
  return { shape: [...t.shape], f32 };
}

function checkedArray(ckpt: Checkpoint, name: string, which: string, shape: number[]): BuiltArray {
  const t = weightTensor(ckpt, `${name}/${which}`);
  if (t.shape.length !== shape.length || t.shape.some((d, i) => d !== shape[i])) {
    throw new ExportError(
      `layer '${name}': ${which} has shape [${t.shape}], expected [${shape}]`,
    );
  }
  return toF32(t);
}

function mapLayer(
  ckpt: Checkpoint,
  layer: NormalLayer,
  inShape: number[],
): { built: Omit<BuiltLayer, "id" | "inputs">; note: string } {
  switch (layer.kind) {
    case "conv": {
      const cin = inShape[inShape.length - 1];
      const [kh, kw] = layer.kernel;
      return {
        built: {
          kind: "conv2d",
          params: {
            out_channels: layer.filters,
            kernel: [kh, kw],
            stride: layer.stride,
            padding: layer.padding,
          },
          weight: checkedArray(ckpt, layer.name, "kernel", [kh, kw, cin, layer.filters]),
          bias: layer.useBias ? checkedArray(ckpt, layer.name, "bias", [layer.filters]) : null,
        },
        note: layer.useBias ? "" : "no bias",
      };
    }
    case "dense": {
      const n = inShape[inShape.length - 1];
      return {
        built: {
          kind: "dense",
          params: { units: layer.units },
          weight: checkedArray(ckpt, layer.name, "kernel", [n, layer.units]),
          bias: layer.useBias ? checkedArray(ckpt, layer.name, "bias", [layer.units]) : null,
        },
        note: layer.useBias ? "" : "no bias",
      };
    }
    case "maxpool":
    case "avgpool":
      return {
        built: {
          kind: layer.kind === "maxpool" ? "maxpool2d" : "avgpool2d",
          params: {
            window: [layer.window[0], layer.window[1]],
            stride: layer.stride,
            padding: layer.padding,
          },
          weight: null,
          bias: null,
        },
        note: "",
      };
    case "batchnorm": {
      const c = inShape[inShape.length - 1];
      const { gamma, beta, mean, variance } = batchNormStats(ckpt, layer.name, c);
      const scale = new Float64Array(c);
      const shift = new Float64Array(c);
      for (let i = 0; i < c; i++) {
        scale[i] = gamma.data[i] / Math.sqrt(variance.data[i] + layer.epsilon);
        shift[i] = beta.data[i] - mean.data[i] * scale[i];
      }
      return {
        built: {
          kind: "batchnorm_folded",
          params: {},
          weight: toF32({ shape: [c], data: scale }),
          bias: toF32({ shape: [c], data: shift }),
        },
        note: "statistics folded into scale/shift",
      };
    }
    case "relu":
    case "flatten":
    case "softmax":
      return {
        built: { kind: layer.kind, params: {}, weight: null, bias: null },
        note: "",
      };
  }
}

export interface Container {
  manifestBytes: Buffer;
  blob: Buffer;
  mapping: LayerMapping[];
  parameterCount: number;
  layers: NormalLayer[];
}

/** Assemble manifest and blob bytes for a checkpoint, without touching disk. */
export function buildContainer(ckpt: Checkpoint): Container {
  const normal = ckpt.layers.map(normalizeLayer);
  if (normal.length === 0) {
    throw new ExportError("checkpoint has no layers");
  }
  const shapes = inferShapes(ckpt.input_shape, normal);
  const finalShape = shapes[shapes.length - 1];
  const outputClasses = finalShape[finalShape.length - 1];
  if (outputClasses < 2) {
    throw new ExportError(
      `final layer '${normal[normal.length - 1].name}' yields ${outputClasses} class(es); need at least 2`,
    );
  }

  const built: BuiltLayer[] = [];
  const mapping: LayerMapping[] = [];
  let parameterCount = 0;
  for (let i = 0; i < normal.length; i++) {
    const inShape = i === 0 ? ckpt.input_shape : shapes[i - 1];
    const { built: body, note } = mapLayer(ckpt, normal[i], inShape);
    const entry: BuiltLayer = {
      id: normal[i].name,
      inputs: i === 0 ? [] : [normal[i - 1].name],
      ...body,
    };
    built.push(entry);
    for (const arr of [entry.weight, entry.bias]) {
      if (arr !== null) parameterCount += arr.f32.length;
    }
    mapping.push({
      source: normal[i].name,
      sourceType: ckpt.layers[i].type,
      target: entry.id,
      targetKind: entry.kind,
      note,
    });
  }

  let offset = 0;
  const chunks: Buffer[] = [];
  const layerEntries: Json[] = [];
  for (const layer of built) {
    const entry: { [key: string]: Json } = {
      id: layer.id,
      kind: layer.kind,
      params: layer.params,
      inputs: layer.inputs,
    };
    for (const [label, arr] of [
      ["weight", layer.weight],
      ["bias", layer.bias],
    ] as const) {
      if (arr === null) {
        entry[`${label}_offset`] = 0;
        entry[`${label}_len`] = 0;
        entry[`${label}_shape`] = null;
      } else {
        const bytes = Buffer.alloc(arr.f32.length * 4);
        for (let i = 0; i < arr.f32.length; i++) bytes.writeFloatLE(arr.f32[i], i * 4);
        entry[`${label}_offset`] = offset;
        entry[`${label}_len`] = bytes.length;
        entry[`${label}_shape`] = arr.shape;
        chunks.push(bytes);
        offset += bytes.length;
      }
    }
    layerEntries.push(entry);
  }
  const blob = Buffer.concat(chunks);
  const manifest: Json = {
    magic: "RLPM1",
    name: ckpt.name ?? "",
    input_shape: ckpt.input_shape,
    output_classes: outputClasses,
    layers: layerEntries,
    blob_checksum: crc32(blob),
  };
  return {
    manifestBytes: canonicalJson(manifest),
    blob,
    mapping,
    parameterCount,
    layers: normal,
  };
}

/** Strip a trailing .json/.bin so both container files share one base path. */
export function basePath(outPath: string): string {
  return outPath.replace(/\.(json|bin)$/, "");
}

export interface ExportOptions {
  probes?: number;
  seed?: number;
}

/** Export a checkpoint to a model container and verify it numerically. */
export function exportModel(
  checkpointPath: string,
  outPath: string,
  options: ExportOptions = {},
): ExportReport {
  const probeCount = options.probes ?? 10;
  if (probeCount < 10) {
    throw new ExportError(`verification needs at least 10 probes, got ${probeCount}`);
  }
  const ckpt = loadCheckpoint(checkpointPath);
  const container = buildContainer(ckpt);

  const base = basePath(outPath);
  writeFileSync(`${base}.json`, container.manifestBytes);
  writeFileSync(`${base}.bin`, container.blob);

  const next = rng(options.seed ?? 20240817);
  const probes: Tensor[] = [];
  for (let i = 0; i < probeCount; i++) {
    probes.push(randomTensor(ckpt.input_shape, next));
  }
  const maxDeviation = verifyRoundtrip(ckpt, base, probes);
  return {
    mapping: container.mapping,
    parameterCount: container.parameterCount,
    probeCount,
    maxDeviation,
  };
}

export function formatReport(report: ExportReport): string {
  const header = ["source", "type", "target", "kind", "note"];
  const rows = report.mapping.map((m) => [m.source, m.sourceType, m.target, m.targetKind, m.note]);
  const widths = header.map((h, i) => Math.max(h.length, ...rows.map((r) => r[i].length)));
  const fmt = (row: string[]) => row.map((cell, i) => cell.padEnd(widths[i])).join("  ").trimEnd();
  const lines = [fmt(header), fmt(widths.map((w) => "-".repeat(w)))];
  for (const row of rows) lines.push(fmt(row));
  lines.push(`parameters: ${report.parameterCount}`);
  lines.push(`probes: ${report.probeCount}`);
  lines.push(`max forward deviation: ${report.maxDeviation.toExponential(3)}`);
  return lines.join("\n") + "\n";
}

export { verifyRoundtrip } from "./verify.js";
