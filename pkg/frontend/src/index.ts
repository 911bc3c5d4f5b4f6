export { EngineError, UnsupportedDtypeError } from "./errors.js";
export { Engine, type Context, type EngineOptions } from "./engine.js";
export {
  BoundTable,
  joinConfigFromDict,
  type Cell,
  type Comparator,
  type JoinAlgorithmName,
  type JoinOptions,
  type JoinTypeName,
  type TableInfo,
} from "./table.js";
export { overheadBench, type OverheadOptions, type OverheadReport } from "./overhead.js";
export {
  decodeTable,
  dtypeOf,
  encodeTable,
  type ColumnData,
  type DType,
  type FixedData,
  type WireColumn,
  type WireTable,
} from "./wire.js";
