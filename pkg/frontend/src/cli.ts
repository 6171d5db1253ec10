#!/usr/bin/env node
/** Command line front end: ``rlpm-export export --in CKPT --out MODEL``.
 *
 * Exit codes: 0 success, 1 usage errors, 2 export or verification
 * failures.
 */
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { ExportError, InputError } from "./errors.js";
import { exportModel, formatReport } from "./export.js";

const USAGE =
  "usage: rlpm-export export --in <checkpoint.json> --out <model> [--probes N] [--seed S]";

function usageError(message: string): number {
  process.stderr.write(`error: ${message}\n${USAGE}\n`);
  return 1;
}

function positiveInt(raw: string | undefined, name: string): number | undefined {
  if (raw === undefined) return undefined;
  const n = Number(raw);
  if (!Number.isInteger(n) || n < 1) {
    throw new InputError(`--${name} must be a positive integer, got '${raw}'`);
  }
  return n;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command === undefined) return usageError("missing command");
  if (command === "--help" || command === "-h") {
    process.stdout.write(USAGE + "\n");
    return 0;
  }
  if (command !== "export") return usageError(`unknown command '${command}'`);

  let values: { in?: string; out?: string; probes?: string; seed?: string };
  try {
    ({ values } = parseArgs({
      args: rest,
      options: {
        in: { type: "string" },
        out: { type: "string" },
        probes: { type: "string" },
        seed: { type: "string" },
      },
      allowPositionals: false,
    }));
  } catch (err) {
    return usageError((err as Error).message);
  }
  if (!values.in) return usageError("--in is required");
  if (!values.out) return usageError("--out is required");

  let probes: number | undefined;
  let seed: number | undefined;
  try {
    probes = positiveInt(values.probes, "probes");
    seed = positiveInt(values.seed, "seed");
  } catch (err) {
    return usageError((err as Error).message);
  }

  try {
    const report = exportModel(values.in, values.out, { probes, seed });
    process.stdout.write(formatReport(report));
    return 0;
  } catch (err) {
    if (err instanceof ExportError || err instanceof InputError) {
      process.stderr.write(`error: ${err.message}\n`);
      return 2;
    }
    throw err;
  }
}

if (import.meta.url === pathToFileURL(process.argv[1] ?? "").href) {
  process.exitCode = main(process.argv.slice(2));
}
