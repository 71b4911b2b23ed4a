/**
 * Flat engine boundary: create / evaluateBatch / lastError / destroy.
 *
 * The engine's stable external interface is the `metricforge-eval`
 * command (UTF-8 TSV on stdin, one score line per record on stdout,
 * errors as exit code + stderr message). Each evaluateBatch call runs
 * one engine process and streams the caller's lines into it with
 * backpressure, so the wrapper holds at most the pipe buffer plus the
 * score array; the engine does its own windowed batching on the far
 * side of the pipe. Model tensors are never mapped into this process.
 */

import { spawn } from "node:child_process";

import {
  BoundaryError,
  ClosedEvaluatorError,
  EngineError,
  classifyExit,
} from "./errors.js";

/** Keyword configuration, mirroring the engine's evaluator constructor. */
export interface EvaluatorOptions {
  model_file: string;
  vocab_file?: string;
  like?: "comet-qe" | "comet" | "bleurt";
  quiet?: boolean;
  fp16?: boolean;
  cpu_threads?: number;
  mini_batch?: number;
  average?: "skip" | "append" | "only";
}

/** Record streams accepted by evaluateBatch: anything iterable. */
export type LineSource = Iterable<string> | AsyncIterable<string>;

/** Opaque evaluator handle; all state lives behind the boundary. */
export interface EvaluatorHandle {
  readonly __brand: "metricforge-evaluator";
}

interface HandleState {
  command: string;
  argv: string[];
  forwardSummary: boolean;
  closed: boolean;
  lastError: BoundaryError | null;
  chain: Promise<unknown>;
}

const STATES = new WeakMap<EvaluatorHandle, HandleState>();

/** Scores round-trip binary64 exactly at 17 significant digits. */
const FULL_PRECISION = "17";

function engineCommand(): string {
  return process.env["METRICFORGE_EVAL_BIN"] ?? "metricforge-eval";
}

function buildArgv(options: EvaluatorOptions): string[] {
  const argv = ["-m", options.model_file, "--stdin"];
  argv.push("--precision", FULL_PRECISION);
  if (options.quiet === true) {
    argv.push("--quiet");
  }
  if (options.vocab_file !== undefined) {
    argv.push("-v", options.vocab_file);
  }
  if (options.like !== undefined) {
    argv.push("--like", options.like);
  }
  if (options.fp16 === true) {
    argv.push("--fp16");
  }
  if (options.cpu_threads !== undefined) {
    argv.push("--workers", String(options.cpu_threads));
  }
  if (options.mini_batch !== undefined) {
    argv.push("--mini-batch", String(options.mini_batch));
  }
  if (options.average !== undefined) {
    argv.push("-a", options.average);
  }
  return argv;
}

/** The subset of a writable stream pumpLines needs. */
export interface LineSink {
  write(chunk: string): boolean;
  end(): void;
  once(event: "drain", listener: () => void): unknown;
}

/**
 * Feed lines into a sink one at a time, honoring backpressure: when a
 * write reports a full buffer, the source is not advanced again until
 * the sink drains. A sink error (e.g. the process exited early) stops
 * the pump quietly; the engine's exit code carries the real failure.
 *
 * @returns the number of lines fed.
 */
export async function pumpLines(lines: LineSource, sink: LineSink): Promise<number> {
  let fed = 0;
  try {
    for await (const line of lines) {
      const chunk = line.endsWith("\n") ? line : `${line}\n`;
      const keepGoing = sink.write(chunk);
      fed += 1;
      if (!keepGoing) {
        await new Promise<void>((resolve) => {
          sink.once("drain", resolve);
        });
      }
    }
    sink.end();
  } catch {
    // Broken pipe: the engine already decided how this run ends.
    try {
      sink.end();
    } catch {
      /* already gone */
    }
  }
  return fed;
}

interface RunResult {
  code: number;
  stdout: string;
  stderr: string;
}

function runEngine(command: string, argv: string[], lines: LineSource): Promise<RunResult> {
  return new Promise((resolve, reject) => {
    const child = spawn(command, argv, { stdio: ["pipe", "pipe", "pipe"] });
    const stdout: Buffer[] = [];
    const stderr: Buffer[] = [];
    child.stdout.on("data", (chunk: Buffer) => stdout.push(chunk));
    child.stderr.on("data", (chunk: Buffer) => stderr.push(chunk));
    child.stdin.on("error", () => {
      /* surfaced through the exit code instead */
    });
    child.on("error", (err) => {
      reject(new EngineError(`cannot run ${command}: ${err.message}`));
    });
    void pumpLines(lines, child.stdin);
    child.on("close", (code) => {
      resolve({
        code: code ?? 1,
        stdout: Buffer.concat(stdout).toString("utf-8"),
        stderr: Buffer.concat(stderr).toString("utf-8"),
      });
    });
  });
}

function parseScores(stdout: string): number[] {
  const scores: number[] = [];
  for (const line of stdout.split("\n")) {
    if (line.length === 0) {
      continue;
    }
    const value = Number(line);
    if (Number.isNaN(value)) {
      throw new EngineError(`unparseable score line from engine: ${JSON.stringify(line)}`);
    }
    scores.push(value);
  }
  return scores;
}

function stateOf(handle: EvaluatorHandle): HandleState {
  const state = STATES.get(handle);
  if (state === undefined || state.closed) {
    throw new ClosedEvaluatorError();
  }
  return state;
}

/**
 * Build an evaluator handle and validate its configuration eagerly by
 * running the engine once over zero records. Bad model paths, missing
 * vocabularies, and kind mismatches surface here, not at first use.
 */
export async function create(options: EvaluatorOptions): Promise<EvaluatorHandle> {
  const command = engineCommand();
  const argv = buildArgv(options);
  const probe = await runEngine(
    command,
    buildArgv({ ...options, average: "skip", quiet: true }),
    [],
  );
  if (probe.code !== 0) {
    throw classifyExit(probe.code, probe.stderr);
  }
  const handle: EvaluatorHandle = { __brand: "metricforge-evaluator" };
  STATES.set(handle, {
    command,
    argv,
    forwardSummary: options.quiet !== true,
    closed: false,
    lastError: null,
    chain: Promise.resolve(),
  });
  return handle;
}

/**
 * Score a stream of TAB-joined field lines against the handle's model.
 * Scores come back in input order at full float64 precision. Calls on
 * one handle are serialized; the stream is consumed lazily as the
 * engine accepts input.
 */
export function evaluateBatch(handle: EvaluatorHandle, lines: LineSource): Promise<number[]> {
  let state: HandleState;
  try {
    state = stateOf(handle);
  } catch (err) {
    return Promise.reject(err);
  }
  const run = async (): Promise<number[]> => {
    const result = await runEngine(state.command, state.argv, lines);
    if (result.code !== 0) {
      throw classifyExit(result.code, result.stderr);
    }
    if (state.forwardSummary && result.stderr.length > 0) {
      process.stderr.write(result.stderr);
    }
    return parseScores(result.stdout);
  };
  const outcome = state.chain.then(run, run).then(
    (scores) => {
      state.lastError = null;
      return scores;
    },
    (err: unknown) => {
      state.lastError = err instanceof BoundaryError ? err : null;
      throw err;
    },
  );
  state.chain = outcome.catch(() => undefined);
  return outcome;
}

/** The (code, message) error from the handle's most recent batch, or
 * null when it succeeded. */
export function lastError(handle: EvaluatorHandle): BoundaryError | null {
  return stateOf(handle).lastError;
}

/**
 * Release the handle. Idempotent; later boundary calls throw
 * ClosedEvaluatorError. No process outlives its evaluateBatch call, so
 * there is nothing asynchronous to wait for.
 */
export function destroy(handle: EvaluatorHandle): void {
  const state = STATES.get(handle);
  if (state !== undefined) {
    state.closed = true;
  }
}
