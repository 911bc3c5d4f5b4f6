/**
 * Binding-overhead benchmark: the same join, once through the native CLI
 * and once through this client, on identical files. Both figures are the
 * operator's timed region only (loading excluded), medians over the
 * post-warm-up repeats; the ratio is the binding overhead.
 */

import { execFile } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { promisify } from "node:util";

import { Engine } from "./engine.js";
import type { JoinAlgorithmName, JoinTypeName } from "./table.js";

const run = promisify(execFile);

export interface OverheadOptions {
  rows: number;
  keyDomain?: number;
  /** timed repeats after one warm-up; default 5 */
  repeats?: number;
  joinType?: JoinTypeName;
  algorithm?: JoinAlgorithmName;
  pythonPath?: string;
  /** working directory for the generated files; default a fresh tmp dir */
  dir?: string;
  keepFiles?: boolean;
}

export interface OverheadReport {
  nativeSeconds: number;
  boundSeconds: number;
  ratio: number;
  rows: number;
  outputRows: number;
}

function median(xs: number[]): number {
  const s = [...xs].sort((a, b) => a - b);
  const mid = Math.floor(s.length / 2);
  return s.length % 2 ? s[mid] : (s[mid - 1] + s[mid]) / 2;
}

export async function overheadBench(opts: OverheadOptions): Promise<OverheadReport> {
  const python = opts.pythonPath ?? process.env.SHARDTABLE_PYTHON ?? "python3";
  const rows = opts.rows;
  const keyDomain = opts.keyDomain ?? Math.max(1, Math.floor(rows / 4));
  const timedRepeats = opts.repeats ?? 5;
  const totalRepeats = timedRepeats + 1; // first is warm-up on both paths
  const joinType = opts.joinType ?? "inner";
  const algorithm = opts.algorithm ?? "sort";
  const dir = opts.dir ?? fs.mkdtempSync(path.join(os.tmpdir(), "overhead-"));
  const prefix = path.join(dir, "data");

  try {
    for (const [relation, seed] of [
      ["1", "1"],
      ["2", "2"],
    ] as const) {
      await run(python, [
        "-m",
        "shardtable",
        "gen",
        "--rows",
        String(rows),
        "--layout",
        "4col",
        "--seed",
        seed,
        "--key-domain",
        String(keyDomain),
        "--prefix",
        `${prefix}_${relation}`,
        "--parts",
        "1",
      ]);
    }

    // native path: the CLI's own timed region, median excluding warm-up
    const native = await run(
      python,
      [
        "-m",
        "shardtable",
        "bench",
        "--op",
        "join",
        "--rows",
        String(rows),
        "--world-size",
        "1",
        "--join-type",
        joinType,
        "--algorithm",
        algorithm,
        "--key-domain",
        String(keyDomain),
        "--repeats",
        String(totalRepeats),
        "--prefix",
        prefix,
      ],
      { maxBuffer: 16 * 1024 * 1024 },
    );
    const nativeTimings: number[] = [];
    let nativeOutputRows = 0;
    for (const line of native.stdout.split("\n")) {
      if (!line || line.startsWith("op,")) continue;
      const cells = line.split(",");
      const repeat = Number(cells[8]);
      if (repeat > 0) nativeTimings.push(Number(cells[10]));
      nativeOutputRows = Number(cells[11]);
    }

    // bound path: identical files and config through the bindings. The
    // previous repeat's output stays alive during the join and is freed
    // inside the timed window, matching the native runner's pattern
    // (holding one output; old one dropped right after the new one lands).
    const engine = await Engine.launch({ pythonPath: python });
    let boundOutputRows = 0;
    const boundTimings: number[] = [];
    try {
      const left = await engine.readCsv(`${prefix}_1_0.csv`);
      const right = await engine.readCsv(`${prefix}_2_0.csv`);
      let prev: Awaited<ReturnType<typeof left.join>> | null = null;
      for (let r = 0; r < totalRepeats; r++) {
        const t0 = performance.now();
        const out = await left.join(right, {
          joinType,
          algorithm,
          leftCol: 0,
          rightCol: 0,
        });
        if (prev) await prev.free();
        const dt = (performance.now() - t0) / 1000;
        if (r > 0) boundTimings.push(dt);
        boundOutputRows = out.rows;
        prev = out;
      }
    } finally {
      await engine.close();
    }

    if (nativeOutputRows !== boundOutputRows) {
      throw new Error(
        `output mismatch: native ${nativeOutputRows} rows, bound ${boundOutputRows}`,
      );
    }
    const nativeSeconds = median(nativeTimings);
    const boundSeconds = median(boundTimings);
    return {
      nativeSeconds,
      boundSeconds,
      ratio: boundSeconds / nativeSeconds,
      rows,
      outputRows: boundOutputRows,
    };
  } finally {
    if (!opts.keepFiles && !opts.dir) {
      fs.rmSync(dir, { recursive: true, force: true });
    }
  }
}
