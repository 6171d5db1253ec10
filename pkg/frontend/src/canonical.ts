/** Canonical JSON bytes: sorted keys, no insignificant whitespace, ASCII
 * only, trailing newline. Matches the engine's manifest serialization so
 * that identical models produce identical container bytes regardless of
 * which side wrote them. */

export type Json = null | boolean | number | string | Json[] | { [key: string]: Json };

const SHORT: Record<number, string> = {
  0x08: "\\b",
  0x09: "\\t",
  0x0a: "\\n",
  0x0c: "\\f",
  0x0d: "\\r",
  0x22: '\\"',
  0x5c: "\\\\",
};

function escapeString(s: string): string {
  let out = '"';
  for (const ch of s) {
    const cp = ch.codePointAt(0)!;
    if (SHORT[cp] !== undefined) {
      out += SHORT[cp];
    } else if (cp < 0x20 || cp > 0x7e) {
      // non-ASCII as \uXXXX (UTF-16 units, so astral chars become a pair)
      for (let i = 0; i < ch.length; i++) {
        out += "\\u" + ch.charCodeAt(i).toString(16).padStart(4, "0");
      }
    } else {
      out += ch;
    }
  }
  return out + '"';
}

function serialize(value: Json): string {
  if (value === null) return "null";
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "number") {
    if (!Number.isSafeInteger(value)) {
      throw new Error(`canonical JSON allows integers only, got ${value}`);
    }
    return String(value);
  }
  if (typeof value === "string") return escapeString(value);
  if (Array.isArray(value)) return "[" + value.map(serialize).join(",") + "]";
  const keys = Object.keys(value).sort();
  return "{" + keys.map((k) => `${escapeString(k)}:${serialize(value[k])}`).join(",") + "}";
}

export function canonicalJson(value: Json): Buffer {
  return Buffer.from(serialize(value) + "\n", "utf8");
}
