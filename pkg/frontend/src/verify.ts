/** Numerical round-trip verification against the installed engine.
 *
 * Each probe is written as a raw float32 image, pushed through
 * ``python3 -m rlpm infer`` on the exported container, and compared to
 * the float64 reference forward pass of the source checkpoint.  The
 * engine appends a softmax when the model does not end in one, so the
 * reference does the same before comparing.
 */
import { execFileSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { Checkpoint } from "./checkpoint.js";
import { ExportError, InputError } from "./errors.js";
import { endsWithSoftmax, runForward } from "./forward.js";
import { normalizeLayer } from "./layers.js";
import { Tensor, sizeOf } from "./tensor.js";

/** Write a tensor as a raw image: three int32 extents then float32 samples,
 * all little-endian.  Vectors are stored as single-channel columns. */
export function writeRaw32(path: string, t: Tensor): void {
  let dims: [number, number, number];
  if (t.shape.length === 3) {
    dims = [t.shape[0], t.shape[1], t.shape[2]];
  } else if (t.shape.length === 1) {
    dims = [t.shape[0], 1, 1];
  } else {
    throw new ExportError(`cannot write rank-${t.shape.length} tensor as an image`);
  }
  const buf = Buffer.alloc(12 + t.data.length * 4);
  buf.writeInt32LE(dims[0], 0);
  buf.writeInt32LE(dims[1], 4);
  buf.writeInt32LE(dims[2], 8);
  for (let i = 0; i < t.data.length; i++) {
    buf.writeFloatLE(Math.fround(t.data[i]), 12 + i * 4);
  }
  writeFileSync(path, buf);
}

function engineProbabilities(rlpmBase: string, imagePath: string): number[] {
  let stdout: string;
  try {
    stdout = execFileSync(
      "python3",
      ["-m", "rlpm", "infer", "--model", rlpmBase, "--image", imagePath],
      { encoding: "utf8", stdio: ["ignore", "pipe", "pipe"] },
    );
  } catch (err) {
    const e = err as { status?: number | null; stderr?: string | Buffer };
    const detail = (e.stderr ?? "").toString().trim().split("\n").slice(-1)[0] ?? "";
    throw new ExportError(
      `engine inference failed (exit ${e.status ?? "?"}): ${detail}`,
    );
  }
  const lines = stdout.trim().split("\n");
  if (lines[0] !== "class,probability") {
    throw new ExportError(`unexpected engine output header '${lines[0]}'`);
  }
  const probs: number[] = [];
  for (const line of lines.slice(1)) {
    const [idx, value] = line.split(",");
    const i = Number(idx);
    const p = Number(value);
    if (!Number.isInteger(i) || i !== probs.length || !Number.isFinite(p)) {
      throw new ExportError(`unexpected engine output row '${line}'`);
    }
    probs.push(p);
  }
  return probs;
}

function softmaxInPlace(v: Float64Array): void {
  let top = -Infinity;
  for (const x of v) top = Math.max(top, x);
  let total = 0;
  for (let i = 0; i < v.length; i++) {
    v[i] = Math.exp(v[i] - top);
    total += v[i];
  }
  for (let i = 0; i < v.length; i++) v[i] /= total;
}

/** Largest relative deviation between engine and reference probabilities
 * across all probes.  Raises when the two disagree structurally. */
export function verifyRoundtrip(ckpt: Checkpoint, rlpmBase: string, probes: Tensor[]): number {
  if (probes.length === 0) {
    throw new InputError("verification needs at least one probe input");
  }
  const layers = ckpt.layers.map(normalizeLayer);
  const withSoftmax = endsWithSoftmax(layers);
  const want = sizeOf(ckpt.input_shape);
  const dir = mkdtempSync(join(tmpdir(), "rlpm-verify-"));
  let worst = 0;
  try {
    for (let p = 0; p < probes.length; p++) {
      const probe = probes[p];
      if (sizeOf(probe.shape) !== want) {
        throw new ExportError(
          `probe ${p} has shape [${probe.shape}] but the checkpoint expects [${ckpt.input_shape}]`,
        );
      }
      const out = runForward(ckpt, layers, probe);
      const reference = out.data.slice();
      if (!withSoftmax) softmaxInPlace(reference);

      const imagePath = join(dir, `probe${p}.raw32`);
      writeRaw32(imagePath, probe);
      const probs = engineProbabilities(rlpmBase, imagePath);
      if (probs.length !== reference.length) {
        throw new ExportError(
          `engine reports ${probs.length} classes, reference produces ${reference.length}`,
        );
      }
      for (let i = 0; i < probs.length; i++) {
        const a = probs[i];
        const b = reference[i];
        const rel = Math.abs(a - b) / Math.max(Math.abs(a), Math.abs(b), 1e-12);
        if (rel > worst) worst = rel;
      }
    }
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
  return worst;
}
