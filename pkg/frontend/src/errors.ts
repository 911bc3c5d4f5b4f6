/** Error thrown for any engine-side failure, carrying the engine's stable
 * error code (e.g. "parse_error", "key_null", "schema_mismatch"). */
export class EngineError extends Error {
  constructor(
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "EngineError";
  }
}

/** A conversion was asked to handle a value outside the supported dtypes. */
export class UnsupportedDtypeError extends EngineError {
  constructor(message: string) {
    super("unsupported_dtype", message);
    this.name = "UnsupportedDtypeError";
  }
}
