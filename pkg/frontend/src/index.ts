/**
 * TypeScript bindings for the metricforge scoring engine.
 *
 * Everything here rides on the engine's stable command-line interface;
 * no engine internals are linked into this package.
 */

export {
  create,
  destroy,
  evaluateBatch,
  lastError,
  pumpLines,
  type EvaluatorHandle,
  type EvaluatorOptions,
  type LineSink,
  type LineSource,
} from "./boundary.js";
export { Evaluator } from "./evaluator.js";
export {
  BoundaryError,
  ClosedEvaluatorError,
  EngineError,
  MetricForgeError,
  UnknownKeywordError,
  UsageError,
  classifyExit,
  extractMessage,
} from "./errors.js";
