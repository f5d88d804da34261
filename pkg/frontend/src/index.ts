/**
 * In-memory client for the splitfdr selector and simulators.
 *
 * Matrices are streamed to the CLI over stdin as CSV and results come back
 * as JSON on stdout, so pipeline code never touches the filesystem for a
 * selection call. All statistical logic and validation live in the backing
 * package; errors surface here with the native error text.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

const MAX_BUFFER = 256 * 1024 * 1024;

export interface MatrixView {
  /** row-major values, length n*p */
  data: Float64Array;
  n: number;
  p: number;
}

export type MatrixInput = number[][] | MatrixView;

export interface SelectOptions {
  q?: number;
  m?: number;
  estimator?: "simple" | "weighted";
  clustering?: "kmeans" | "pc1";
  test?: "z_known_var" | "welch_t" | "wilcoxon_signed" | "pois_glm_wald";
  combiner?: "sum" | "product" | "min";
  restarts?: number;
  knownSigma?: number;
}

export interface MdsSelection {
  method: string;
  q: number;
  m: number;
  estimator: string;
  cutoffRate: number;
  nSelected: number;
  /** 1-based feature indices, matching the CLI report */
  selected: number[];
  inclusionRates: number[];
  perSplit: number[][];
  seed: number;
}

export interface DsSelection {
  method: string;
  q: number;
  combiner: string;
  globalSign: number;
  tauQ: number | "infinite";
  nSelected: number;
  selected: number[];
  mirrors: number[];
  seed: number;
}

export interface SimulateOptions {
  model: "gaussian" | "poisson" | "trajectory";
  n: number;
  p: number;
  p1: number;
  delta?: number;
  rho?: number;
  sigmaEps?: number;
  beta0?: number;
  classProb?: number;
}

export interface SimulatedData {
  matrix: number[][];
  /** 1-based indices of the truly relevant features */
  relevant: number[];
  latent: number[];
}

export const version = "0.1.0";

function pythonCommand(): string {
  return process.env.SPLITFDR_PYTHON ?? "python3";
}

function toCsv(matrix: MatrixInput): { text: string; n: number; p: number } {
  if (Array.isArray(matrix)) {
    const n = matrix.length;
    const p = n > 0 ? matrix[0].length : 0;
    const lines = matrix.map((row) => {
      if (row.length !== p) {
        throw new Error("ragged matrix: rows must share one length");
      }
      return row.map(cellToString).join(",");
    });
    return { text: lines.join("\n") + "\n", n, p };
  }
  const { data, n, p } = matrix;
  if (data.length !== n * p) {
    throw new Error(`matrix view length ${data.length} != n*p = ${n * p}`);
  }
  const lines: string[] = new Array(n);
  for (let i = 0; i < n; i++) {
    const cells: string[] = new Array(p);
    for (let j = 0; j < p; j++) {
      cells[j] = cellToString(data[i * p + j]);
    }
    lines[i] = cells.join(",");
  }
  return { text: lines.join("\n") + "\n", n, p };
}

function cellToString(v: number): string {
  // Number.prototype.toString round-trips doubles exactly; the backing
  // parser reads it back bit-identically. Non-finite values are forwarded
  // so validation (and its error text) stays in one place.
  return String(v);
}

function runCli(args: string[], input?: string): string {
  const proc = spawnSync(pythonCommand(), ["-m", "splitfdr.cli", ...args], {
    input,
    encoding: "utf-8",
    maxBuffer: MAX_BUFFER,
  });
  if (proc.error) {
    throw proc.error;
  }
  if (proc.status !== 0) {
    const message = (proc.stderr || proc.stdout || "").trim();
    throw new Error(message || `splitfdr exited with status ${proc.status}`);
  }
  return proc.stdout;
}

function selectArgs(options: SelectOptions, seed: number): string[] {
  const args = ["select", "--input", "-", "--out", "-", "--seed", String(seed)];
  if (options.q !== undefined) args.push("--q", String(options.q));
  if (options.m !== undefined) args.push("--m", String(options.m));
  if (options.estimator) args.push("--estimator", options.estimator);
  if (options.clustering) args.push("--clustering", options.clustering);
  if (options.test) args.push("--test", options.test);
  if (options.combiner) args.push("--combiner", options.combiner);
  if (options.restarts !== undefined) args.push("--restarts", String(options.restarts));
  if (options.knownSigma !== undefined) args.push("--known-sigma", String(options.knownSigma));
  return args;
}

/** Run the multiple-data-splitting selector on an in-memory matrix. */
export function selectMds(
  matrix: MatrixInput,
  options: SelectOptions = {},
  seed = 0,
): MdsSelection {
  const { text } = toCsv(matrix);
  const args = selectArgs(options, seed);
  args.push("--method", "mds");
  const report = JSON.parse(runCli(args, text));
  return {
    method: report.method,
    q: report.q,
    m: report.m,
    estimator: report.estimator,
    cutoffRate: report.cutoff_rate,
    nSelected: report.n_selected,
    selected: report.selected,
    inclusionRates: report.inclusion_rates,
    perSplit: report.per_split_selected,
    seed: report.seed,
  };
}

/** Run a single data-splitting selection on an in-memory matrix. */
export function selectDs(
  matrix: MatrixInput,
  options: SelectOptions = {},
  seed = 0,
): DsSelection {
  const { text } = toCsv(matrix);
  const args = selectArgs(options, seed);
  args.push("--method", "ds");
  const report = JSON.parse(runCli(args, text));
  return {
    method: report.method,
    q: report.q,
    combiner: report.combiner,
    globalSign: report.global_sign,
    tauQ: report.tau_q,
    nSelected: report.n_selected,
    selected: report.selected,
    mirrors: report.mirrors,
    seed: report.seed,
  };
}

/** Generate one of the built-in synthetic models with ground truth. */
export function simulate(options: SimulateOptions, seed = 0): SimulatedData {
  const dir = mkdtempSync(join(tmpdir(), "splitfdr-"));
  const matrixPath = join(dir, "matrix.csv");
  const sidecarPath = join(dir, "matrix.json");
  try {
    const args = [
      "simulate",
      "--model", options.model,
      "--n", String(options.n),
      "--p", String(options.p),
      "--p1", String(options.p1),
      "--seed", String(seed),
      "--out", matrixPath,
      "--sidecar", sidecarPath,
    ];
    if (options.delta !== undefined) args.push("--delta", String(options.delta));
    if (options.rho !== undefined) args.push("--rho", String(options.rho));
    if (options.sigmaEps !== undefined) args.push("--sigma-eps", String(options.sigmaEps));
    if (options.beta0 !== undefined) args.push("--beta0", String(options.beta0));
    if (options.classProb !== undefined) args.push("--class-prob", String(options.classProb));
    runCli(args);
    const matrix = readFileSync(matrixPath, "utf-8")
      .trim()
      .split("\n")
      .map((line) => line.split(",").map(Number));
    const sidecar = JSON.parse(readFileSync(sidecarPath, "utf-8"));
    return { matrix, relevant: sidecar.relevant, latent: sidecar.latent };
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
