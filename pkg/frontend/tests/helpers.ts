/**
 * Shared test scaffolding: tiny model fixtures generated once per
 * machine by the engine's own fixture script, plus a synchronous CLI
 * runner for parity checks.
 */

import { execFileSync, spawnSync } from "node:child_process";
import { existsSync, mkdtempSync, renameSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const REPO_ROOT = join(dirname(fileURLToPath(import.meta.url)), "..", "..");
const FIXTURE_DIR = join(tmpdir(), "metricforge-ts-fixtures-v1");

export interface Fixtures {
  vocab: string;
  qeModel: string;
  cometModel: string;
  bleurtModel: string;
  qeSample: string;
}

function fixturePaths(root: string): Fixtures {
  return {
    vocab: join(root, "vocab.txt"),
    qeModel: join(root, "comet_qe.mfrg"),
    cometModel: join(root, "comet.mfrg"),
    bleurtModel: join(root, "bleurt.mfrg"),
    qeSample: join(root, "comet_qe_sample.tsv"),
  };
}

/** Generate (or reuse) the tiny-model fixture set. Safe under parallel
 * test workers: generation goes to a staging dir, then one rename. */
export function ensureFixtures(): Fixtures {
  const paths = fixturePaths(FIXTURE_DIR);
  if (Object.values(paths).every((p) => existsSync(p))) {
    return paths;
  }
  const staging = mkdtempSync(join(tmpdir(), "metricforge-ts-staging-"));
  execFileSync("python3", [join(REPO_ROOT, "tests", "fixturegen.py"), staging], {
    stdio: "ignore",
  });
  try {
    renameSync(staging, FIXTURE_DIR);
  } catch {
    // Another worker won the rename; its output is equivalent.
    rmSync(staging, { recursive: true, force: true });
  }
  return paths;
}

export interface CliRun {
  status: number;
  stdout: string;
  stderr: string;
}

/** Run the engine CLI to completion with the given stdin text. */
export function runCliSync(argv: string[], input = ""): CliRun {
  const bin = process.env["METRICFORGE_EVAL_BIN"] ?? "metricforge-eval";
  const result = spawnSync(bin, argv, { input, encoding: "utf-8" });
  if (result.error !== undefined) {
    throw result.error;
  }
  return {
    status: result.status ?? 1,
    stdout: result.stdout,
    stderr: result.stderr,
  };
}
