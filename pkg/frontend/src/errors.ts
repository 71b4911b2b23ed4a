/**
 * Error types for the bindings.
 *
 * Engine failures cross the process boundary as (code, message) pairs:
 * the exit code classifies the failure and stderr carries the message.
 * They are re-raised here as typed errors so callers can discriminate
 * without string matching.
 */

/** Base class for every error this package throws. */
export class MetricForgeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MetricForgeError";
  }
}

/** An error that crossed the engine boundary, carrying its exit code. */
export class BoundaryError extends MetricForgeError {
  public readonly code: number;

  constructor(message: string, code: number) {
    super(message);
    this.name = "BoundaryError";
    this.code = code;
  }
}

/** The engine rejected the request itself: bad flags, unknown metric,
 * wrong column counts, missing fields (exit code 2). */
export class UsageError extends BoundaryError {
  constructor(message: string) {
    super(message, 2);
    this.name = "UsageError";
  }
}

/** The engine failed while working: container corruption, download or
 * I/O trouble, empty-input averaging (exit code 1). */
export class EngineError extends BoundaryError {
  constructor(message: string, code = 1) {
    super(message, code);
    this.name = "EngineError";
  }
}

/** A keyword the evaluator constructor does not know. */
export class UnknownKeywordError extends MetricForgeError {
  constructor(keyword: string) {
    super(`unknown keyword argument '${keyword}'`);
    this.name = "UnknownKeywordError";
  }
}

/** Use of an evaluator after close()/destroy(). */
export class ClosedEvaluatorError extends MetricForgeError {
  constructor(message = "evaluator is closed") {
    super(message);
    this.name = "ClosedEvaluatorError";
  }
}

const STDERR_PREFIX = "metricforge-eval: error: ";

/**
 * Pull the engine's error message out of captured stderr.
 * Falls back to the raw text (or a placeholder) when the expected
 * prefix is absent, e.g. when the process died before reporting.
 */
export function extractMessage(stderr: string): string {
  for (const line of stderr.split("\n")) {
    if (line.startsWith(STDERR_PREFIX)) {
      return line.slice(STDERR_PREFIX.length);
    }
  }
  const trimmed = stderr.trim();
  return trimmed.length > 0 ? trimmed : "engine process failed without a message";
}

/** Map an exit code plus captured stderr to the matching typed error. */
export function classifyExit(code: number, stderr: string): BoundaryError {
  const message = extractMessage(stderr);
  if (code === 2) {
    return new UsageError(message);
  }
  return new EngineError(message, code);
}
