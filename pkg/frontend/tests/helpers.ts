import { execFile } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { promisify } from "node:util";

import { decodeTable, encodeTable, type DType, type WireColumn, type WireTable } from "../src/wire.js";

export const run = promisify(execFile);

const HERE = path.dirname(fileURLToPath(import.meta.url));
export const ORACLE = path.resolve(HERE, "..", "engine", "native_oracle.py");
export const PYTHON = process.env.SHARDTABLE_PYTHON ?? "python3";

/** mulberry32: small deterministic PRNG for reproducible cases. */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randInt(r: () => number, n: number): number {
  return Math.floor(r() * n);
}

const UTF8_POOL = ["", "a", "bee", "héllo", "日本語", "x,y", 'q"q', "k1", "k2"];

export function randomColumn(
  r: () => number,
  dtype: DType,
  rows: number,
  keyDomain?: number,
  allowNulls = false,
): WireColumn {
  let values: WireColumn["values"];
  if (dtype === "int64") {
    const arr = new BigInt64Array(rows);
    for (let i = 0; i < rows; i++) {
      arr[i] = BigInt(keyDomain ? randInt(r, keyDomain) : randInt(r, 2000) - 1000);
    }
    values = arr;
  } else if (dtype === "float64") {
    const arr = new Float64Array(rows);
    for (let i = 0; i < rows; i++) {
      if (keyDomain) {
        arr[i] = randInt(r, keyDomain) / 2;
      } else {
        const roll = r();
        arr[i] = roll < 0.1 ? -0.0 : roll < 0.2 ? NaN : roll < 0.25 ? Infinity : r() * 200 - 100;
      }
    }
    values = arr;
  } else if (dtype === "bool") {
    const arr = new Uint8Array(rows);
    for (let i = 0; i < rows; i++) arr[i] = r() < 0.5 ? 1 : 0;
    values = arr;
  } else {
    const arr: string[] = [];
    for (let i = 0; i < rows; i++) {
      arr.push(keyDomain ? `k${randInt(r, keyDomain)}` : UTF8_POOL[randInt(r, UTF8_POOL.length)]);
    }
    values = arr;
  }
  let validity: Uint8Array | undefined;
  if (allowNulls && rows > 0) {
    validity = new Uint8Array(rows).fill(1);
    let any = false;
    for (let i = 0; i < rows; i++) {
      if (r() < 0.15) {
        validity[i] = 0;
        any = true;
      }
    }
    if (!any) validity = undefined;
  }
  return { dtype, values, validity };
}

const QNAN = 0x7ff8000000000000n;

/** Canonical token per cell so multisets compare exactly (NaN folded to one
 * pattern, -0 to +0, nulls explicit). Independent of the engine encoding. */
export function cellToken(col: WireColumn, i: number): string {
  if (col.validity && !col.validity[i]) return "n";
  if (col.dtype === "int64") return `i:${(col.values as BigInt64Array)[i]}`;
  if (col.dtype === "float64") {
    const v = (col.values as Float64Array)[i];
    const dv = new DataView(new ArrayBuffer(8));
    dv.setFloat64(0, Number.isNaN(v) ? NaN : v === 0 ? 0 : v, true);
    let bits = dv.getBigUint64(0, true);
    if (Number.isNaN(v)) bits = QNAN;
    return `f:${bits}`;
  }
  if (col.dtype === "bool") return `b:${(col.values as Uint8Array)[i]}`;
  return `s:${(col.values as string[])[i]}`;
}

export function rowTokens(table: WireTable): string[] {
  const out: string[] = [];
  for (let i = 0; i < table.rows; i++) {
    out.push(table.columns.map((c) => cellToken(c, i)).join("|"));
  }
  return out;
}

export function sortedTokens(table: WireTable): string[] {
  return rowTokens(table).sort();
}

/** Write a table to disk in the engine wire layout + schema sidecar. */
export function storeWire(file: string, names: string[], columns: WireColumn[], rows: number) {
  fs.writeFileSync(file, encodeTable(columns, rows));
  fs.writeFileSync(
    `${file}.schema.json`,
    JSON.stringify({ names, dtypes: columns.map((c) => c.dtype) }),
  );
}

export function loadWire(file: string): WireTable {
  const meta = JSON.parse(fs.readFileSync(`${file}.schema.json`, "utf-8"));
  return decodeTable(fs.readFileSync(file), meta.names, meta.dtypes);
}

/** Run one operator through the native engine (no bindings involved). */
export async function nativeOp(
  dir: string,
  op: string,
  extraArgs: string[],
  left: { names: string[]; columns: WireColumn[]; rows: number },
  right?: { names: string[]; columns: WireColumn[]; rows: number },
): Promise<WireTable> {
  const leftFile = path.join(dir, "left.bin");
  const outFile = path.join(dir, "out.bin");
  storeWire(leftFile, left.names, left.columns, left.rows);
  const argv = [ORACLE, "--op", op, "--left", leftFile, "--out", outFile, ...extraArgs];
  if (right) {
    const rightFile = path.join(dir, "right.bin");
    storeWire(rightFile, right.names, right.columns, right.rows);
    argv.push("--right", rightFile);
  }
  await run(PYTHON, argv);
  return loadWire(outFile);
}
