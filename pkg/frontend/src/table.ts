/**
 * Handle-based table API. A BoundTable is a reference to an engine-owned
 * table: operator calls run in the engine and hand back new handles, so no
 * row data crosses the process boundary. Exporting data is an explicit
 * conversion (toColumns / toRows).
 */

import type { Engine } from "./engine.js";
import { decodeTable, type DType, type WireTable } from "./wire.js";

export interface TableInfo {
  handle: number;
  names: string[];
  dtypes: DType[];
  rows: number;
}

export type JoinTypeName = "inner" | "left" | "right" | "full_outer";
export type JoinAlgorithmName = "hash" | "sort";

export interface JoinOptions {
  joinType: JoinTypeName;
  algorithm: JoinAlgorithmName;
  leftCol: number | number[];
  rightCol: number | number[];
}

/** Accepts the config-dict shape
 * {join_type: "left", algorithm: "hash", left_col: 0, right_col: 0}. */
export function joinConfigFromDict(cfg: {
  join_type: string;
  algorithm: string;
  left_col: number | number[];
  right_col: number | number[];
}): JoinOptions {
  return {
    joinType: cfg.join_type as JoinTypeName,
    algorithm: cfg.algorithm as JoinAlgorithmName,
    leftCol: cfg.left_col,
    rightCol: cfg.right_col,
  };
}

export type Cell = bigint | number | string | boolean | null;

export type Comparator = "==" | "!=" | "<" | "<=" | ">" | ">=";

export class BoundTable {
  readonly handle: number;
  readonly names: string[];
  readonly dtypes: DType[];
  readonly rows: number;

  constructor(
    private readonly engine: Engine,
    info: TableInfo,
  ) {
    this.handle = info.handle;
    this.names = info.names;
    this.dtypes = info.dtypes;
    this.rows = info.rows;
  }

  private joinCmd(op: string, other: BoundTable, cfg: JoinOptions) {
    return {
      op,
      left: this.handle,
      right: other.handle,
      join_type: cfg.joinType,
      algorithm: cfg.algorithm,
      left_col: cfg.leftCol,
      right_col: cfg.rightCol,
    };
  }

  join(other: BoundTable, cfg: JoinOptions): Promise<BoundTable> {
    return this.engine.requestTable(this.joinCmd("join", other, cfg));
  }

  distributedJoin(other: BoundTable, cfg: JoinOptions): Promise<BoundTable> {
    return this.engine.requestTable(this.joinCmd("distributed_join", other, cfg));
  }

  union(other: BoundTable): Promise<BoundTable> {
    return this.engine.requestTable({ op: "union", a: this.handle, b: other.handle });
  }

  distributedUnion(other: BoundTable): Promise<BoundTable> {
    return this.engine.requestTable({ op: "distributed_union", a: this.handle, b: other.handle });
  }

  intersect(other: BoundTable): Promise<BoundTable> {
    return this.engine.requestTable({ op: "intersect", a: this.handle, b: other.handle });
  }

  distributedIntersect(other: BoundTable): Promise<BoundTable> {
    return this.engine.requestTable({
      op: "distributed_intersect",
      a: this.handle,
      b: other.handle,
    });
  }

  difference(other: BoundTable): Promise<BoundTable> {
    return this.engine.requestTable({ op: "difference", a: this.handle, b: other.handle });
  }

  distributedDifference(other: BoundTable): Promise<BoundTable> {
    return this.engine.requestTable({
      op: "distributed_difference",
      a: this.handle,
      b: other.handle,
    });
  }

  /** Row filter from a (column, comparator, literal) triple. */
  select(col: number, cmp: Comparator, literal: string | number | boolean): Promise<BoundTable> {
    return this.engine.requestTable({
      op: "select",
      table: this.handle,
      col,
      cmp,
      literal: String(literal),
    });
  }

  distributedSelect(
    col: number,
    cmp: Comparator,
    literal: string | number | boolean,
  ): Promise<BoundTable> {
    return this.engine.requestTable({
      op: "distributed_select",
      table: this.handle,
      col,
      cmp,
      literal: String(literal),
    });
  }

  project(cols: number[]): Promise<BoundTable> {
    return this.engine.requestTable({ op: "project", table: this.handle, cols });
  }

  distributedProject(cols: number[]): Promise<BoundTable> {
    return this.engine.requestTable({ op: "distributed_project", table: this.handle, cols });
  }

  canonicalSort(): Promise<BoundTable> {
    return this.engine.requestTable({ op: "canonical_sort", table: this.handle });
  }

  /** Export as columnar arrays: typed arrays for fixed-width dtypes (one
   * buffer copy per column), string arrays for utf8. */
  async toColumns(): Promise<WireTable> {
    const { body, binary } = await this.engine.request({ op: "to_columns", table: this.handle });
    return decodeTable(binary, body.names, body.dtypes);
  }

  /** Row-major export decoded client-side from toColumns. Null cells come
   * back as null; int64 cells as bigint. */
  async toRows(): Promise<Cell[][]> {
    const wire = await this.toColumns();
    const out: Cell[][] = [];
    for (let i = 0; i < wire.rows; i++) {
      const row: Cell[] = [];
      for (const col of wire.columns) {
        if (col.validity && !col.validity[i]) {
          row.push(null);
        } else if (col.dtype === "bool") {
          row.push((col.values as Uint8Array)[i] === 1);
        } else if (col.dtype === "utf8") {
          row.push((col.values as string[])[i]);
        } else if (col.dtype === "int64") {
          row.push((col.values as BigInt64Array)[i]);
        } else {
          row.push((col.values as Float64Array)[i]);
        }
      }
      out.push(row);
    }
    return out;
  }

  async writeCsv(path: string, opts: { delimiter?: string; writeHeader?: boolean } = {}) {
    await this.engine.request({
      op: "write_csv",
      table: this.handle,
      path,
      delimiter: opts.delimiter ?? ",",
      write_header: opts.writeHeader ?? true,
    });
  }

  /** Drop the engine-side table. The handle is dead afterwards. */
  async free(): Promise<void> {
    await this.engine.request({ op: "free", table: this.handle });
  }
}
