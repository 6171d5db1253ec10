/** Container assembly and the full export path against the installed
 * engine.  The blob layout check is a direct byte comparison (float32
 * payloads pass through untouched); the normalization folding check
 * recomputes the affine form independently from the raw statistics. */
import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync, readdirSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { weightTensor } from "../src/checkpoint.js";
import { crc32 } from "../src/crc32.js";
import { ExportError } from "../src/errors.js";
import {
  ExportReport,
  basePath,
  buildContainer,
  exportModel,
} from "../src/export.js";
import { f32Entry, makeConvBnCheckpoint, makeDenseCheckpoint } from "./fixtures.js";

const dir = mkdtempSync(join(tmpdir(), "export-test-"));
afterAll(() => rmSync(dir, { recursive: true, force: true }));

function writeCkpt(name: string, ckpt: object): string {
  const path = join(dir, name);
  writeFileSync(path, JSON.stringify(ckpt));
  return path;
}

describe("buildContainer", () => {
  it("copies float32 weight payloads into the blob unchanged, in layer order", () => {
    const ckpt = makeDenseCheckpoint();
    const { blob } = buildContainer(ckpt);
    const expected = Buffer.concat(
      ["fc1/kernel", "fc1/bias", "fc2/kernel", "fc2/bias"].map((key) =>
        Buffer.from(ckpt.weights[key].data, "base64"),
      ),
    );
    expect(blob.equals(expected)).toBe(true);
  });

  it("writes a manifest the engine's container format defines", () => {
    const ckpt = makeDenseCheckpoint();
    const { manifestBytes, blob, parameterCount } = buildContainer(ckpt);
    expect(manifestBytes.toString("utf8").endsWith("\n")).toBe(true);
    const manifest = JSON.parse(manifestBytes.toString("utf8"));
    expect(manifest.magic).toBe("RLPM1");
    expect(manifest.name).toBe("dense-probe");
    expect(manifest.input_shape).toEqual([6]);
    expect(manifest.output_classes).toBe(3);
    expect(manifest.blob_checksum).toBe(crc32(blob));
    expect(manifest.layers.map((l: { id: string }) => l.id)).toEqual([
      "fc1",
      "act1",
      "fc2",
      "probs",
    ]);
    expect(manifest.layers[0].inputs).toEqual([]);
    expect(manifest.layers[1].inputs).toEqual(["fc1"]);
    expect(manifest.layers[1].weight_shape).toBeNull();
    expect(manifest.layers[1].weight_len).toBe(0);
    expect(manifest.layers[0].weight_shape).toEqual([6, 4]);
    expect(manifest.layers[0].weight_len).toBe(24 * 4);
    expect(manifest.layers[0].bias_offset).toBe(24 * 4);
    expect(parameterCount).toBe(24 + 4 + 12 + 3);
  });

  it("folds normalization statistics into an affine layer that matches the unfolded form", () => {
    const ckpt = makeConvBnCheckpoint();
    const { manifestBytes, blob } = buildContainer(ckpt);
    const manifest = JSON.parse(manifestBytes.toString("utf8"));
    const entry = manifest.layers.find((l: { id: string }) => l.id === "norm1");
    expect(entry.kind).toBe("batchnorm_folded");
    expect(entry.weight_shape).toEqual([4]);
    expect(entry.bias_shape).toEqual([4]);

    const gamma = weightTensor(ckpt, "norm1/gamma").data;
    const beta = weightTensor(ckpt, "norm1/beta").data;
    const mean = weightTensor(ckpt, "norm1/moving_mean").data;
    const variance = weightTensor(ckpt, "norm1/moving_variance").data;
    for (let c = 0; c < 4; c++) {
      const scale = blob.readFloatLE(entry.weight_offset + 4 * c);
      const shift = blob.readFloatLE(entry.bias_offset + 4 * c);
      for (const x of [-2, -0.3, 0, 0.7, 1.9]) {
        const unfolded = (gamma[c] * (x - mean[c])) / Math.sqrt(variance[c] + 1e-3) + beta[c];
        expect(Math.abs(scale * x + shift - unfolded)).toBeLessThanOrEqual(1e-6);
      }
    }
  });

  it("emits explicit window, stride and padding for pooling layers", () => {
    const ckpt = makeConvBnCheckpoint();
    const manifest = JSON.parse(buildContainer(ckpt).manifestBytes.toString("utf8"));
    const pool = manifest.layers.find((l: { id: string }) => l.id === "pool1");
    expect(pool.params).toEqual({ window: [2, 2], stride: 2, padding: "valid" });
    const conv = manifest.layers.find((l: { id: string }) => l.id === "conv1");
    expect(conv.params).toEqual({
      out_channels: 4,
      kernel: [3, 3],
      stride: 1,
      padding: "same",
    });
    expect(conv.bias_shape).toBeNull();
  });

  it("rejects outputs with fewer than two classes", () => {
    const ckpt = makeDenseCheckpoint();
    ckpt.layers = ckpt.layers.slice(0, 1);
    (ckpt.layers[0].config as { units: number }).units = 1;
    ckpt.weights["fc1/kernel"] = f32Entry([6, 1], [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    ckpt.weights["fc1/bias"] = f32Entry([1], [0]);
    expect(() => buildContainer(ckpt)).toThrow(/at least 2/);
  });
});

describe("basePath", () => {
  it("strips a single container suffix", () => {
    expect(basePath("m.json")).toBe("m");
    expect(basePath("m.bin")).toBe("m");
    expect(basePath("m")).toBe("m");
    expect(basePath("dir.json/m")).toBe("dir.json/m");
  });
});

describe("exportModel failure atomicity", () => {
  it("names an unsupported layer and leaves no files behind", () => {
    const ckpt = makeDenseCheckpoint();
    ckpt.layers = [...ckpt.layers.slice(0, 2), { name: "drop1", type: "Dropout" }, ...ckpt.layers.slice(2)];
    const ckptPath = writeCkpt("with-dropout.json", ckpt);
    const outDir = mkdtempSync(join(tmpdir(), "export-out-"));
    try {
      expect(() => exportModel(ckptPath, join(outDir, "model"))).toThrow(
        /layer 'drop1': unsupported layer type 'Dropout'/,
      );
      expect(readdirSync(outDir)).toEqual([]);
    } finally {
      rmSync(outDir, { recursive: true, force: true });
    }
  });

  it("aborts on a missing weight before writing anything", () => {
    const ckpt = makeDenseCheckpoint();
    delete ckpt.weights["fc2/bias"];
    const ckptPath = writeCkpt("missing-weight.json", ckpt);
    const outDir = mkdtempSync(join(tmpdir(), "export-out-"));
    try {
      expect(() => exportModel(ckptPath, join(outDir, "model"))).toThrow(
        /missing weight 'fc2\/bias'/,
      );
      expect(readdirSync(outDir)).toEqual([]);
    } finally {
      rmSync(outDir, { recursive: true, force: true });
    }
  });

  it("rejects verification with fewer than ten probes", () => {
    const ckptPath = writeCkpt("few-probes.json", makeDenseCheckpoint());
    expect(() => exportModel(ckptPath, join(dir, "unused"), { probes: 4 })).toThrow(
      /at least 10 probes/,
    );
    expect(existsSync(join(dir, "unused.json"))).toBe(false);
  });
});

describe("exportModel end to end", () => {
  const ckptPath = writeCkpt("dense.json", makeDenseCheckpoint());
  let report: ExportReport;

  beforeAll(() => {
    report = exportModel(ckptPath, join(dir, "model.json"), { seed: 5 });
  });

  it("writes both container files under the shared base path", () => {
    expect(existsSync(join(dir, "model.json"))).toBe(true);
    expect(existsSync(join(dir, "model.bin"))).toBe(true);
  });

  it("reports the mapping, parameter count and probe deviation", () => {
    expect(report.mapping.map((m) => `${m.source}->${m.targetKind}`)).toEqual([
      "fc1->dense",
      "act1->relu",
      "fc2->dense",
      "probs->softmax",
    ]);
    expect(report.parameterCount).toBe(43);
    expect(report.probeCount).toBe(10);
    expect(report.maxDeviation).toBeGreaterThanOrEqual(0);
    expect(report.maxDeviation).toBeLessThanOrEqual(1e-6);
  });

  it("passes the engine's own container validation", () => {
    const stdout = execFileSync(
      "python3",
      ["-m", "rlpm", "validate", "--model", join(dir, "model")],
      { encoding: "utf8" },
    );
    expect(stdout).toContain("status: OK");
    expect(stdout).toContain(`total parameters: ${report.parameterCount}`);
    expect(stdout).toContain("model: dense-probe");
  });

  it("is deterministic: a second export writes identical bytes", () => {
    exportModel(ckptPath, join(dir, "again"), { seed: 5 });
    for (const ext of [".json", ".bin"]) {
      const a = readFileSync(join(dir, `model${ext}`));
      const b = readFileSync(join(dir, `again${ext}`));
      expect(a.equals(b)).toBe(true);
    }
  });
});

describe("error taxonomy", () => {
  it("wraps structural problems in ExportError", () => {
    expect(() => buildContainer({ ...makeDenseCheckpoint(), layers: [] })).toThrow(ExportError);
  });
});
