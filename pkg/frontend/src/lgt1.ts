/**
 * lgt1.ts: codec for the LGT1 tensor container over typed arrays.
 *
 * Layout (little-endian throughout):
 *   bytes 0-3   magic ASCII "LGT1"
 *   byte  4     dtype code: 1 = float32, 2 = float64
 *   byte  5     ndim, 1..4
 *   bytes 6-7   reserved, must be zero
 *   then        ndim x uint64 dimension sizes
 *   then        payload, IEEE-754, row-major (last dimension fastest)
 *
 * No padding, no alignment, no checksum. Decoding copies the payload into
 * a fresh typed array, so callers' buffers are never aliased or mutated.
 */

export type Dtype = "float32" | "float64";

export interface Tensor {
  dtype: Dtype;
  shape: number[];
  /** Row-major payload; Float32Array for float32, Float64Array for float64. */
  data: Float32Array | Float64Array;
}

export class Lgt1FormatError extends Error {}
export class Lgt1ValidationError extends Error {}

const MAGIC = [0x4c, 0x47, 0x54, 0x31]; // "LGT1"
const CODE_OF: Record<Dtype, number> = { float32: 1, float64: 2 };
const DTYPE_OF: Record<number, Dtype> = { 1: "float32", 2: "float64" };
const ITEM_SIZE: Record<Dtype, number> = { float32: 4, float64: 8 };

export function elementCount(shape: number[]): number {
  let count = 1;
  for (const s of shape) count *= s;
  return count;
}

export function encodeTensor(t: Tensor): Uint8Array {
  const ndim = t.shape.length;
  if (ndim < 1 || ndim > 4) {
    throw new Lgt1FormatError(`ndim must be 1..4, got ${ndim}`);
  }
  const count = elementCount(t.shape);
  if (t.data.length !== count) {
    throw new Lgt1FormatError(
      `payload length ${t.data.length} does not match shape [${t.shape.join(", ")}]`,
    );
  }
  const itemSize = ITEM_SIZE[t.dtype];
  const bytes = new Uint8Array(8 + 8 * ndim + count * itemSize);
  const view = new DataView(bytes.buffer);
  bytes.set(MAGIC, 0);
  bytes[4] = CODE_OF[t.dtype];
  bytes[5] = ndim;
  for (let i = 0; i < ndim; i++) {
    view.setBigUint64(8 + 8 * i, BigInt(t.shape[i]), true);
  }
  const base = 8 + 8 * ndim;
  if (t.dtype === "float32") {
    const data = t.data as Float32Array;
    for (let i = 0; i < count; i++) view.setFloat32(base + 4 * i, data[i], true);
  } else {
    const data = t.data as Float64Array;
    for (let i = 0; i < count; i++) view.setFloat64(base + 8 * i, data[i], true);
  }
  return bytes;
}

export function decodeTensor(bytes: Uint8Array): Tensor {
  if (bytes.length < 8) {
    throw new Lgt1FormatError("file too short for an LGT1 header");
  }
  for (let i = 0; i < 4; i++) {
    if (bytes[i] !== MAGIC[i]) {
      throw new Lgt1FormatError("bad magic: expected \"LGT1\"");
    }
  }
  const dtype = DTYPE_OF[bytes[4]];
  if (dtype === undefined) {
    throw new Lgt1FormatError(`unknown dtype code ${bytes[4]}`);
  }
  const ndim = bytes[5];
  if (ndim < 1 || ndim > 4) {
    throw new Lgt1FormatError(`ndim must be 1..4, got ${ndim}`);
  }
  if (bytes[6] !== 0 || bytes[7] !== 0) {
    throw new Lgt1FormatError("reserved header bytes must be zero");
  }
  const dimEnd = 8 + 8 * ndim;
  if (bytes.length < dimEnd) {
    throw new Lgt1FormatError("truncated dimension table");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const shape: number[] = [];
  for (let i = 0; i < ndim; i++) {
    const dim = view.getBigUint64(8 + 8 * i, true);
    if (dim > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new Lgt1FormatError(`dimension ${i} too large: ${dim}`);
    }
    shape.push(Number(dim));
  }
  const count = elementCount(shape);
  const itemSize = ITEM_SIZE[dtype];
  const expected = dimEnd + count * itemSize;
  if (bytes.length !== expected) {
    throw new Lgt1FormatError(
      `payload size mismatch: header declares ${count} scalars, ` +
      `file carries ${(bytes.length - dimEnd) / itemSize}`,
    );
  }
  const data = dtype === "float32" ? new Float32Array(count) : new Float64Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = dtype === "float32"
      ? view.getFloat32(dimEnd + 4 * i, true)
      : view.getFloat64(dimEnd + 8 * i, true);
  }
  for (let i = 0; i < count; i++) {
    if (!Number.isFinite(data[i])) {
      throw new Lgt1ValidationError("tensor contains NaN or Inf entries");
    }
  }
  return { dtype, shape, data };
}

/** Convenience constructor for a rank-3 [B x L x d] float64 logit tensor. */
export function logitTensor(shape: [number, number, number], values: number[]): Tensor {
  const data = Float64Array.from(values);
  if (data.length !== elementCount(shape)) {
    throw new Lgt1FormatError("values length does not match shape");
  }
  return { dtype: "float64", shape: [...shape], data };
}
