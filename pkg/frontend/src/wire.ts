/**
 * Encoder/decoder for the engine's binary table layout.
 *
 * Layout (little-endian): u32 column count, u64 row count; per column a
 * dtype code byte (0=int64, 1=float64, 2=utf8, 3=bool), a has-validity
 * byte, an optional LSB-first validity bitmap padded to whole bytes, then
 * the value buffers (int64/float64 fixed 8 bytes per value; bool one byte;
 * utf8 as u64 offset count, u64 offsets, then the byte buffer).
 *
 * Fixed-width columns decode into typed arrays with one buffer copy and no
 * per-cell boxing; strings decode into a js array.
 */

import * as os from "node:os";
import { EngineError, UnsupportedDtypeError } from "./errors.js";

if (os.endianness() !== "LE") {
  throw new Error("this client assumes a little-endian host");
}

export type DType = "int64" | "float64" | "utf8" | "bool";

export type FixedData = BigInt64Array | Float64Array | Uint8Array;
export type ColumnData = FixedData | string[];

export interface WireColumn {
  dtype: DType;
  values: ColumnData;
  /** One byte per row, 1 = present. Absent means everything is present. */
  validity?: Uint8Array;
}

export interface WireTable {
  names: string[];
  dtypes: DType[];
  rows: number;
  columns: WireColumn[];
}

const DTYPE_CODES: Record<DType, number> = { int64: 0, float64: 1, utf8: 2, bool: 3 };
const CODE_DTYPES: DType[] = ["int64", "float64", "utf8", "bool"];

const textEncoder = new TextEncoder();
const textDecoder = new TextDecoder("utf-8", { fatal: true });

function packBitsLsb(validity: Uint8Array): Uint8Array {
  const out = new Uint8Array(Math.ceil(validity.length / 8));
  for (let i = 0; i < validity.length; i++) {
    if (validity[i]) out[i >> 3] |= 1 << (i & 7);
  }
  return out;
}

function unpackBitsLsb(bytes: Uint8Array, count: number): Uint8Array {
  const out = new Uint8Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = (bytes[i >> 3] >> (i & 7)) & 1;
  }
  return out;
}

/** dtype implied by a column's runtime representation. */
export function dtypeOf(values: ColumnData): DType {
  if (values instanceof BigInt64Array) return "int64";
  if (values instanceof Float64Array) return "float64";
  if (values instanceof Uint8Array) return "bool";
  if (Array.isArray(values) && values.every((v) => typeof v === "string")) return "utf8";
  throw new UnsupportedDtypeError(
    "columns must be BigInt64Array, Float64Array, Uint8Array (bool), or string[]",
  );
}

export function encodeTable(columns: WireColumn[], rows: number): Buffer {
  const parts: Buffer[] = [];
  const header = Buffer.alloc(12);
  header.writeUInt32LE(columns.length, 0);
  header.writeBigUInt64LE(BigInt(rows), 4);
  parts.push(header);
  for (const col of columns) {
    if (lengthOf(col.values) !== rows) {
      throw new EngineError("config_error", "column lengths must all equal the row count");
    }
    const desc = Buffer.from([DTYPE_CODES[col.dtype], col.validity ? 1 : 0]);
    parts.push(desc);
    if (col.validity) {
      if (col.validity.length !== rows) {
        throw new EngineError("config_error", "validity length must equal the row count");
      }
      parts.push(Buffer.from(packBitsLsb(col.validity)));
    }
    if (col.dtype === "utf8") {
      const strs = col.values as string[];
      const blobs = strs.map((s) => textEncoder.encode(s));
      const offsets = Buffer.alloc(8 + 8 * (rows + 1));
      offsets.writeBigUInt64LE(BigInt(rows + 1), 0);
      let total = 0n;
      offsets.writeBigUInt64LE(0n, 8);
      for (let i = 0; i < rows; i++) {
        total += BigInt(blobs[i].length);
        offsets.writeBigUInt64LE(total, 16 + 8 * i);
      }
      parts.push(offsets, ...blobs.map((b) => Buffer.from(b)));
    } else if (col.dtype === "bool") {
      parts.push(Buffer.from(col.values as Uint8Array));
    } else {
      const arr = col.values as BigInt64Array | Float64Array;
      parts.push(Buffer.from(arr.buffer, arr.byteOffset, arr.byteLength));
    }
  }
  return Buffer.concat(parts);
}

function lengthOf(values: ColumnData): number {
  return Array.isArray(values) ? values.length : values.length;
}

class Cursor {
  pos = 0;
  constructor(readonly buf: Buffer) {}

  take(n: number): Buffer {
    if (this.pos + n > this.buf.length) {
      throw new EngineError("wire_format", `truncated table buffer at offset ${this.pos}`);
    }
    const out = this.buf.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  u64(): number {
    const v = this.take(8).readBigUInt64LE(0);
    if (v > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new EngineError("wire_format", "length exceeds the safe integer range");
    }
    return Number(v);
  }
}

/** One aligned copy of a byte range into a fresh typed array. */
function copyInto<T extends BigInt64Array | Float64Array>(
  ctor: new (n: number) => T,
  bytes: Buffer,
  n: number,
): T {
  const arr = new ctor(n);
  new Uint8Array(arr.buffer).set(bytes);
  return arr;
}

export function decodeTable(buf: Buffer, names: string[], dtypes: DType[]): WireTable {
  const cur = new Cursor(buf);
  const ncols = cur.take(4).readUInt32LE(0);
  const rows = cur.u64();
  if (ncols !== dtypes.length) {
    throw new EngineError("wire_format", `${ncols} columns on the wire, expected ${dtypes.length}`);
  }
  const columns: WireColumn[] = [];
  for (let c = 0; c < ncols; c++) {
    const code = cur.take(1)[0];
    const hasValidity = cur.take(1)[0] === 1;
    const dtype = CODE_DTYPES[code];
    if (dtype === undefined || dtype !== dtypes[c]) {
      throw new EngineError("wire_format", `column ${c}: wire dtype ${code} != ${dtypes[c]}`);
    }
    let validity: Uint8Array | undefined;
    if (hasValidity) {
      validity = unpackBitsLsb(cur.take(Math.ceil(rows / 8)), rows);
    }
    if (dtype === "utf8") {
      const offCount = cur.u64();
      if (offCount !== rows + 1) {
        throw new EngineError("wire_format", `expected ${rows + 1} offsets, got ${offCount}`);
      }
      const offBytes = cur.take(8 * offCount);
      const offsets: number[] = [];
      for (let i = 0; i < offCount; i++) {
        offsets.push(Number(offBytes.readBigUInt64LE(8 * i)));
      }
      const data = cur.take(offsets[offsets.length - 1]);
      const strs: string[] = [];
      for (let i = 0; i < rows; i++) {
        strs.push(textDecoder.decode(data.subarray(offsets[i], offsets[i + 1])));
      }
      columns.push({ dtype, values: strs, validity });
    } else if (dtype === "bool") {
      columns.push({ dtype, values: Uint8Array.from(cur.take(rows)), validity });
    } else if (dtype === "int64") {
      columns.push({ dtype, values: copyInto(BigInt64Array, cur.take(8 * rows), rows), validity });
    } else {
      columns.push({ dtype, values: copyInto(Float64Array, cur.take(8 * rows), rows), validity });
    }
  }
  if (cur.pos !== buf.length) {
    throw new EngineError("wire_format", `${buf.length - cur.pos} trailing bytes after table`);
  }
  return { names, dtypes, rows, columns };
}
