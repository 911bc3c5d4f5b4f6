/**
 * Engine process management and the request/response protocol.
 *
 * An Engine owns one engine-server subprocess and one loopback socket to
 * it. Messages travel in the engine's frame format (u32 tag | u32 source
 * rank | u64 payload length); the tag carries the request id and is echoed
 * on the response. Payloads are a u32 JSON length, the JSON body, then an
 * optional binary table section.
 */

import { spawn, type ChildProcess } from "node:child_process";
import * as net from "node:net";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { EngineError } from "./errors.js";
import { BoundTable, type TableInfo } from "./table.js";
import { dtypeOf, encodeTable, type ColumnData, type DType, type WireColumn } from "./wire.js";

const FRAME_HEADER_SIZE = 16;
const CLIENT_SOURCE = 0;

const HERE = path.dirname(fileURLToPath(import.meta.url));
const DEFAULT_SERVER = path.resolve(HERE, "..", "engine", "server.py");

export interface EngineOptions {
  /** python interpreter; default $SHARDTABLE_PYTHON or "python3" */
  pythonPath?: string;
  /** engine server entry point; default the bundled server */
  serverPath?: string;
  /** extra environment (e.g. SHARD_RANK/SHARD_WORLD_SIZE/SHARD_PEERS) */
  env?: Record<string, string>;
}

interface Pending {
  resolve: (v: { body: any; binary: Buffer }) => void;
  reject: (e: Error) => void;
}

export interface Context {
  rank: number;
  worldSize: number;
  barrier(): Promise<void>;
  finalize(): Promise<void>;
}

export class Engine {
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private recv: Buffer = Buffer.alloc(0);
  private closed = false;

  private constructor(
    private readonly proc: ChildProcess,
    private readonly sock: net.Socket,
  ) {
    sock.on("data", (chunk) => this.onData(chunk));
    sock.on("close", () => this.failAll(new EngineError("transport_error", "engine closed")));
  }

  static async launch(opts: EngineOptions = {}): Promise<Engine> {
    const python = opts.pythonPath ?? process.env.SHARDTABLE_PYTHON ?? "python3";
    const server = opts.serverPath ?? DEFAULT_SERVER;
    const proc = spawn(python, [server, "--port", "0"], {
      stdio: ["ignore", "pipe", "inherit"],
      env: { ...process.env, ...opts.env },
    });
    const port = await new Promise<number>((resolve, reject) => {
      let acc = "";
      proc.stdout!.on("data", (d: Buffer) => {
        acc += d.toString();
        const m = acc.match(/PORT (\d+)/);
        if (m) resolve(Number(m[1]));
      });
      proc.on("exit", (code) =>
        reject(new EngineError("transport_error", `engine exited early (code ${code})`)),
      );
      proc.on("error", reject);
    });
    const sock = await new Promise<net.Socket>((resolve, reject) => {
      const s = net.createConnection({ host: "127.0.0.1", port }, () => resolve(s));
      s.on("error", reject);
    });
    sock.setNoDelay(true);
    return new Engine(proc, sock);
  }

  private onData(chunk: Buffer): void {
    this.recv = this.recv.length ? Buffer.concat([this.recv, chunk]) : chunk;
    while (this.recv.length >= FRAME_HEADER_SIZE) {
      const tag = this.recv.readUInt32LE(0);
      const length = Number(this.recv.readBigUInt64LE(8));
      if (this.recv.length < FRAME_HEADER_SIZE + length) return;
      const payload = this.recv.subarray(FRAME_HEADER_SIZE, FRAME_HEADER_SIZE + length);
      this.recv = this.recv.subarray(FRAME_HEADER_SIZE + length);
      const jsonLen = payload.readUInt32LE(0);
      const body = JSON.parse(payload.subarray(4, 4 + jsonLen).toString("utf-8"));
      const binary = Buffer.from(payload.subarray(4 + jsonLen));
      const waiter = this.pending.get(tag);
      if (waiter) {
        this.pending.delete(tag);
        if (body.ok === false) {
          waiter.reject(new EngineError(body.error.code, body.error.message));
        } else {
          waiter.resolve({ body, binary });
        }
      }
    }
  }

  private failAll(err: Error): void {
    for (const waiter of this.pending.values()) waiter.reject(err);
    this.pending.clear();
  }

  /** Low-level request; most callers use the typed helpers instead. */
  request(cmd: Record<string, unknown>, binary?: Buffer): Promise<{ body: any; binary: Buffer }> {
    if (this.closed) {
      return Promise.reject(new EngineError("transport_error", "engine is closed"));
    }
    const id = this.nextId++;
    const json = Buffer.from(JSON.stringify(cmd), "utf-8");
    const payload = Buffer.alloc(4 + json.length);
    payload.writeUInt32LE(json.length, 0);
    json.copy(payload, 4);
    const full = binary ? Buffer.concat([payload, binary]) : payload;
    const header = Buffer.alloc(FRAME_HEADER_SIZE);
    header.writeUInt32LE(id, 0);
    header.writeUInt32LE(CLIENT_SOURCE, 4);
    header.writeBigUInt64LE(BigInt(full.length), 8);
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.sock.write(Buffer.concat([header, full]));
    });
  }

  async requestTable(cmd: Record<string, unknown>, binary?: Buffer): Promise<BoundTable> {
    const { body } = await this.request(cmd, binary);
    return new BoundTable(this, body as TableInfo);
  }

  /** Load a CSV file in the engine; no rows cross the boundary. */
  readCsv(
    filePath: string,
    opts: { delimiter?: string; hasHeader?: boolean; dtypes?: DType[] } = {},
  ): Promise<BoundTable> {
    return this.requestTable({
      op: "read_csv",
      path: filePath,
      delimiter: opts.delimiter ?? ",",
      has_header: opts.hasHeader ?? true,
      dtypes: opts.dtypes,
    });
  }

  /** Import caller-side columnar arrays as an engine table (one buffer
   * copy per column). Dtypes come from the array types unless given. */
  fromColumns(
    names: string[],
    columns: (ColumnData | WireColumn)[],
    opts: { dtypes?: DType[] } = {},
  ): Promise<BoundTable> {
    if (columns.length !== names.length) {
      throw new EngineError("config_error", "one name per column required");
    }
    const cols: WireColumn[] = columns.map((c, i) => {
      // a WireColumn is a plain descriptor object, never an array/typed array
      const isDescriptor =
        typeof c === "object" && c !== null && !Array.isArray(c) && !ArrayBuffer.isView(c);
      const values = isDescriptor ? (c as WireColumn).values : (c as ColumnData);
      const dtype = opts.dtypes?.[i] ?? dtypeOf(values);
      return { dtype, values, validity: isDescriptor ? (c as WireColumn).validity : undefined };
    });
    const rows = cols.length ? cols[0].values.length : 0;
    for (const c of cols) {
      if (c.values.length !== rows) {
        throw new EngineError("config_error", "from_columns arrays must be equal-length");
      }
    }
    return this.requestTable(
      { op: "from_columns", names, dtypes: cols.map((c) => c.dtype) },
      encodeTable(cols, rows),
    );
  }

  /** Initialize the distributed context from the SHARD_* environment the
   * engine was launched with. */
  async initContext(): Promise<Context> {
    const { body } = await this.request({ op: "init_context" });
    const engine = this;
    return {
      rank: body.rank,
      worldSize: body.world_size,
      async barrier() {
        await engine.request({ op: "barrier" });
      },
      async finalize() {
        await engine.request({ op: "finalize_context" });
      },
    };
  }

  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    try {
      const id = this.nextId++;
      const json = Buffer.from(JSON.stringify({ op: "shutdown" }), "utf-8");
      const payload = Buffer.alloc(4 + json.length);
      payload.writeUInt32LE(json.length, 0);
      json.copy(payload, 4);
      const header = Buffer.alloc(FRAME_HEADER_SIZE);
      header.writeUInt32LE(id, 0);
      header.writeUInt32LE(CLIENT_SOURCE, 4);
      header.writeBigUInt64LE(BigInt(payload.length), 8);
      this.sock.write(Buffer.concat([header, payload]));
    } catch {
      // socket may already be gone
    }
    this.sock.end();
    await new Promise<void>((resolve) => {
      const t = setTimeout(() => {
        this.proc.kill();
        resolve();
      }, 3000);
      this.proc.on("exit", () => {
        clearTimeout(t);
        resolve();
      });
    });
  }
}
