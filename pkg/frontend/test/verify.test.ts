/** Round-trip verification against the real engine, and the command
 * line wrapper.  The dense and convolutional fixtures exercise the two
 * tolerance regimes: pure float32 pass-through weights, and folded
 * normalization statistics that pick up one extra rounding step. */
import { execFileSync, spawnSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, describe, expect, it } from "vitest";

import { ExportError, InputError } from "../src/errors.js";
import { exportModel } from "../src/export.js";
import { randomTensor, rng, tensor } from "../src/tensor.js";
import { verifyRoundtrip, writeRaw32 } from "../src/verify.js";
import { makeConvBnCheckpoint, makeDenseCheckpoint } from "./fixtures.js";

const dir = mkdtempSync(join(tmpdir(), "verify-test-"));
afterAll(() => rmSync(dir, { recursive: true, force: true }));

function writeCkpt(name: string, ckpt: object): string {
  const path = join(dir, name);
  writeFileSync(path, JSON.stringify(ckpt));
  return path;
}

describe("writeRaw32", () => {
  it("lays out three little-endian extents then float32 samples", () => {
    const path = join(dir, "t.raw32");
    writeRaw32(path, tensor([2, 1, 1], [1.5, -2.5]));
    const buf = readFileSync(path);
    expect(buf.length).toBe(12 + 8);
    expect([buf.readInt32LE(0), buf.readInt32LE(4), buf.readInt32LE(8)]).toEqual([2, 1, 1]);
    expect([buf.readFloatLE(12), buf.readFloatLE(16)]).toEqual([1.5, -2.5]);
  });

  it("stores vectors as single-channel columns", () => {
    const path = join(dir, "v.raw32");
    writeRaw32(path, tensor([5], [0, 1, 2, 3, 4]));
    const buf = readFileSync(path);
    expect([buf.readInt32LE(0), buf.readInt32LE(4), buf.readInt32LE(8)]).toEqual([5, 1, 1]);
  });

  it("rejects ranks the image format cannot hold", () => {
    expect(() => writeRaw32(join(dir, "bad.raw32"), tensor([2, 2], [1, 2, 3, 4]))).toThrow(
      /rank-2/,
    );
  });
});

describe("verifyRoundtrip input handling", () => {
  it("rejects an empty probe list", () => {
    expect(() => verifyRoundtrip(makeDenseCheckpoint(), join(dir, "unused"), [])).toThrow(
      InputError,
    );
  });

  it("rejects probes whose shape disagrees with the checkpoint", () => {
    const probe = tensor([4], [1, 2, 3, 4]);
    expect(() => verifyRoundtrip(makeDenseCheckpoint(), join(dir, "unused"), [probe])).toThrow(
      /probe 0 has shape \[4\]/,
    );
  });
});

describe("round-trip deviation against the engine", () => {
  it("stays within 1e-6 for a dense model", () => {
    const ckptPath = writeCkpt("dense.json", makeDenseCheckpoint());
    const report = exportModel(ckptPath, join(dir, "dense-model"), { probes: 10, seed: 1 });
    expect(report.maxDeviation).toBeLessThanOrEqual(1e-6);
  });

  it("stays within 1e-5 for a convolutional model with folded normalization", () => {
    const ckptPath = writeCkpt("convbn.json", makeConvBnCheckpoint());
    const report = exportModel(ckptPath, join(dir, "convbn-model"), { probes: 10, seed: 2 });
    expect(report.maxDeviation).toBeLessThanOrEqual(1e-5);
    expect(report.mapping.find((m) => m.source === "norm1")?.targetKind).toBe(
      "batchnorm_folded",
    );
  });

  it("compares against explicit probes through the public helper", () => {
    const ckpt = makeDenseCheckpoint();
    const ckptPath = writeCkpt("dense2.json", ckpt);
    exportModel(ckptPath, join(dir, "dense2-model"), { probes: 10, seed: 3 });
    const next = rng(99);
    const probes = [randomTensor([6], next), randomTensor([6], next)];
    const worst = verifyRoundtrip(ckpt, join(dir, "dense2-model"), probes);
    expect(worst).toBeLessThanOrEqual(1e-6);
  });

  it("raises when the exported model disagrees structurally", () => {
    const denseBase = join(dir, "dense-model");
    const other = makeConvBnCheckpoint();
    const probe = randomTensor([8, 8, 1], rng(4));
    // dense-model has 3 classes but expects 6 inputs; feeding it 8x8x1
    // images makes the engine fail, which must surface as ExportError
    expect(() => verifyRoundtrip(other, denseBase, [probe])).toThrow(ExportError);
  });
});

describe("command line", () => {
  const cli = fileURLToPath(new URL("../dist/cli.js", import.meta.url));

  function runCli(...args: string[]) {
    return spawnSync("node", [cli, ...args], { encoding: "utf8" });
  }

  it("exports, prints the report and exits 0", () => {
    const ckptPath = writeCkpt("cli-dense.json", makeDenseCheckpoint());
    const out = join(dir, "cli-model");
    const res = runCli("export", "--in", ckptPath, "--out", out, "--seed", "7");
    expect(res.status).toBe(0);
    expect(res.stdout).toContain("fc1");
    expect(res.stdout).toContain("max forward deviation");
    expect(res.stdout).toContain("parameters: 43");
    expect(existsSync(`${out}.json`)).toBe(true);
    expect(existsSync(`${out}.bin`)).toBe(true);
    const validated = execFileSync("python3", ["-m", "rlpm", "validate", "--model", out], {
      encoding: "utf8",
    });
    expect(validated).toContain("status: OK");
  });

  it("treats bad usage as exit 1", () => {
    expect(runCli().status).toBe(1);
    expect(runCli("frobnicate").status).toBe(1);
    expect(runCli("export", "--in", "x.json").status).toBe(1);
    expect(runCli("export", "--in", "x.json", "--out", "y", "--probes", "zero").status).toBe(1);
    const res = runCli("export", "--out", "y");
    expect(res.status).toBe(1);
    expect(res.stderr).toContain("--in is required");
    expect(res.stderr).toContain("usage:");
  });

  it("treats export failures as exit 2", () => {
    const res = runCli("export", "--in", join(dir, "no-such.json"), "--out", join(dir, "never"));
    expect(res.status).toBe(2);
    expect(res.stderr).toContain("cannot read checkpoint");
    expect(existsSync(join(dir, "never.json"))).toBe(false);
  });

  it("prints usage on --help and exits 0", () => {
    const res = runCli("--help");
    expect(res.status).toBe(0);
    expect(res.stdout).toContain("usage:");
  });
});
