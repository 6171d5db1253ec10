/** Minimal dense float64 tensors, row-major, shape-tagged. */

export interface Tensor {
  shape: number[];
  data: Float64Array;
}

export function tensor(shape: number[], data?: ArrayLike<number>): Tensor {
  const size = shape.reduce((a, b) => a * b, 1);
  if (data !== undefined && data.length !== size) {
    throw new Error(`tensor data length ${data.length} does not match shape [${shape}]`);
  }
  return { shape: [...shape], data: data ? Float64Array.from(data) : new Float64Array(size) };
}

export function sizeOf(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

/** Seeded PRNG (mulberry32) for reproducible probes and fixtures. */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Uniform values in [lo, hi), pre-rounded to float32 so the exact same
 * numbers survive a float32 container round trip. */
export function randomTensor(
  shape: number[],
  next: () => number,
  lo = 0,
  hi = 1,
): Tensor {
  const out = tensor(shape);
  for (let i = 0; i < out.data.length; i++) {
    out.data[i] = Math.fround(lo + (hi - lo) * next());
  }
  return out;
}
