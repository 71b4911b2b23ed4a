/**
 * Evaluator facade over the flat boundary, shaped like the engine's
 * own keyword-argument constructor: unknown keywords are rejected by
 * name at construction, known ones are forwarded unchanged.
 */

import {
  create,
  destroy,
  evaluateBatch,
  lastError,
  type EvaluatorHandle,
  type EvaluatorOptions,
  type LineSource,
} from "./boundary.js";
import { BoundaryError, UnknownKeywordError, UsageError } from "./errors.js";

const ALLOWED_KEYWORDS: ReadonlySet<string> = new Set([
  "model_file",
  "vocab_file",
  "like",
  "quiet",
  "fp16",
  "cpu_threads",
  "mini_batch",
  "average",
]);

function checkOptions(options: Record<string, unknown>): EvaluatorOptions {
  for (const key of Object.keys(options)) {
    if (!ALLOWED_KEYWORDS.has(key)) {
      throw new UnknownKeywordError(key);
    }
  }
  if (typeof options["model_file"] !== "string") {
    throw new UsageError("model_file is required");
  }
  return options as unknown as EvaluatorOptions;
}

export class Evaluator {
  readonly #handle: EvaluatorHandle;

  private constructor(handle: EvaluatorHandle) {
    this.#handle = handle;
  }

  /** Configure and validate an evaluator; rejects on bad options or a
   * model the engine cannot load. */
  static async new(options: Record<string, unknown>): Promise<Evaluator> {
    const handle = await create(checkOptions(options));
    return new Evaluator(handle);
  }

  /**
   * Score TAB-joined records, preserving input order. Concurrent calls
   * on one evaluator are serialized, each seeing a consistent engine.
   */
  evaluate(lines: LineSource): Promise<number[]> {
    return evaluateBatch(this.#handle, lines);
  }

  /** Error from the most recent evaluate call, or null on success. */
  lastError(): BoundaryError | null {
    return lastError(this.#handle);
  }

  /** Release the evaluator; safe to call more than once. */
  close(): void {
    destroy(this.#handle);
  }
}

export type { EvaluatorOptions, LineSource };
