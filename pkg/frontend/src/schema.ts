/**
 * Readers for the run-directory artifacts written by the `adjprec` CLI.
 *
 * Everything here consumes only the documented CSV / summary.json schemas;
 * parse failures carry the offending filename (and line, when known).
 */

import { readFileSync, existsSync } from "node:fs";
import { join } from "node:path";
import Papa from "papaparse";

export class PlotsError extends Error {}

export interface StateRow {
  x: number;
  E: number;
  T: number;
}

export interface HistoryRow {
  iter: number;
  C_E: number;
  C_T: number;
  grad_norm_E: number;
  grad_norm_T: number;
  wall_s: number;
}

export interface SweepRow {
  scale_x: number;
  scale_y: number;
  outcome: string;
  iterations: number;
  initial_cost: number;
  final_cost: number;
  directory: string;
}

export interface FinalCompareRow {
  x: number;
  E_unperturbed: number;
  T_unperturbed: number;
  E_observed: number;
  T_observed: number;
  E_reconstructed: number;
  T_reconstructed: number;
}

export interface SnapshotEntry {
  t: number;
  file: string;
}

export interface ForwardSummary {
  schema_version: number;
  command: string;
  snapshots: SnapshotEntry[];
}

function requireFile(path: string): string {
  if (!existsSync(path)) {
    throw new PlotsError(`missing input file: ${path}`);
  }
  return readFileSync(path, "utf-8");
}

function parseCsv<T>(path: string, columns: string[]): T[] {
  const text = requireFile(path);
  const out = Papa.parse<Record<string, unknown>>(text, {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (out.errors.length > 0) {
    const e = out.errors[0];
    const line = e.row === undefined ? "?" : String(e.row + 2);
    throw new PlotsError(`${path}:${line}: ${e.message}`);
  }
  const fields = out.meta.fields ?? [];
  for (const col of columns) {
    if (!fields.includes(col)) {
      throw new PlotsError(`${path}: missing column "${col}" (found: ${fields.join(", ")})`);
    }
  }
  out.data.forEach((row, i) => {
    for (const col of columns) {
      const v = row[col];
      if (typeof v !== "number" && typeof v !== "string") {
        throw new PlotsError(`${path}:${i + 2}: bad value in column "${col}"`);
      }
    }
  });
  return out.data as T[];
}

export function readStateCsv(path: string): StateRow[] {
  return parseCsv<StateRow>(path, ["x", "E", "T"]);
}

export function readHistoryCsv(path: string): HistoryRow[] {
  return parseCsv<HistoryRow>(path, [
    "iter", "C_E", "C_T", "grad_norm_E", "grad_norm_T", "wall_s",
  ]);
}

export function readSweepCsv(path: string): SweepRow[] {
  return parseCsv<SweepRow>(path, [
    "scale_x", "scale_y", "outcome", "iterations",
    "initial_cost", "final_cost", "directory",
  ]);
}

export function readFinalCompareCsv(path: string): FinalCompareRow[] {
  return parseCsv<FinalCompareRow>(path, [
    "x", "E_unperturbed", "T_unperturbed", "E_observed", "T_observed",
    "E_reconstructed", "T_reconstructed",
  ]);
}

export function readForwardSummary(runDir: string): ForwardSummary {
  const path = join(runDir, "summary.json");
  const text = requireFile(path);
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new PlotsError(`${path}: invalid JSON (${(e as Error).message})`);
  }
  const summary = doc as ForwardSummary;
  if (!Array.isArray(summary.snapshots)) {
    throw new PlotsError(`${path}: missing "snapshots" list (is this a forward run?)`);
  }
  return summary;
}
