/**
 * The four figures, each a pair of panels (E left, T right) built from a
 * run directory: wave snapshots, cost-vs-iteration curves, reconstructed
 * initial conditions, and the final-time comparison.
 */

import { existsSync } from "node:fs";
import { join } from "node:path";
import {
  PlotsError,
  readFinalCompareCsv,
  readForwardSummary,
  readHistoryCsv,
  readStateCsv,
  readSweepCsv,
  StateRow,
} from "./schema.js";
import { PanelSpec, renderFigure, Series } from "./svg.js";

export const FIGURE_NAMES = [
  "snapshots", "cost-curves", "recon-initial", "final-compare",
] as const;
export type FigureName = (typeof FIGURE_NAMES)[number];

function statePair(series: Array<{ label: string; rows: StateRow[] }>,
                   titleE: string, titleT: string, yLog: boolean): PanelSpec[] {
  const eSeries: Series[] = series.map((s) => ({
    label: s.label,
    x: s.rows.map((r) => r.x),
    y: s.rows.map((r) => r.E),
  }));
  const tSeries: Series[] = series.map((s) => ({
    label: s.label,
    x: s.rows.map((r) => r.x),
    y: s.rows.map((r) => r.T),
  }));
  return [
    { title: titleE, xLabel: "x [cm]", yLabel: "E [erg/cm^3]", yLog, series: eSeries },
    { title: titleT, xLabel: "x [cm]", yLabel: "T [eV]", yLog, series: tSeries },
  ];
}

function fmtTime(t: number): string {
  return `t = ${t.toExponential(2)} s`;
}

export function figureSnapshots(runDir: string): string {
  const summary = readForwardSummary(runDir);
  if (summary.snapshots.length === 0) {
    throw new PlotsError(`${join(runDir, "summary.json")}: empty snapshot list`);
  }
  const series = summary.snapshots.map((s) => ({
    label: fmtTime(s.t),
    rows: readStateCsv(join(runDir, s.file)),
  }));
  return renderFigure(statePair(series, "Radiation energy", "Material temperature", true));
}

export function figureCostCurves(runDir: string): string {
  const sweepPath = join(runDir, "sweep.csv");
  let entries: Array<{ label: string; file: string }>;
  if (existsSync(sweepPath)) {
    entries = readSweepCsv(sweepPath).map((row) => ({
      label: row.directory,
      file: join(runDir, row.directory, "history.csv"),
    }));
    if (entries.length === 0) {
      throw new PlotsError(`${sweepPath}: empty sweep table`);
    }
  } else {
    // single inversion run
    entries = [{ label: "run", file: join(runDir, "history.csv") }];
  }
  const histories = entries.map((e) => ({ label: e.label, rows: readHistoryCsv(e.file) }));
  const panels: PanelSpec[] = [
    {
      title: "Cost C_E",
      xLabel: "iteration",
      yLabel: "C_E",
      yLog: true,
      series: histories.map((h) => ({
        label: h.label,
        x: h.rows.map((r) => r.iter),
        y: h.rows.map((r) => r.C_E),
      })),
    },
    {
      title: "Cost C_T",
      xLabel: "iteration",
      yLabel: "C_T",
      yLog: true,
      series: histories.map((h) => ({
        label: h.label,
        x: h.rows.map((r) => r.iter),
        y: h.rows.map((r) => r.C_T),
      })),
    },
  ];
  return renderFigure(panels);
}

export function figureReconInitial(runDir: string): string {
  const series = [
    { label: "true", rows: readStateCsv(join(runDir, "true_initial.csv")) },
    { label: "reconstructed", rows: readStateCsv(join(runDir, "recon_initial.csv")) },
  ];
  return renderFigure(statePair(series, "Initial E", "Initial T", false));
}

export function figureFinalCompare(runDir: string): string {
  const rows = readFinalCompareCsv(join(runDir, "final_compare.csv"));
  const x = rows.map((r) => r.x);
  const pick = (key: "E" | "T"): Series[] => [
    { label: "unperturbed", x, y: rows.map((r) => r[`${key}_unperturbed`]) },
    { label: "observed", x, y: rows.map((r) => r[`${key}_observed`]) },
    { label: "reconstructed", x, y: rows.map((r) => r[`${key}_reconstructed`]) },
  ];
  const panels: PanelSpec[] = [
    { title: "Final E", xLabel: "x [cm]", yLabel: "E [erg/cm^3]", yLog: true, series: pick("E") },
    { title: "Final T", xLabel: "x [cm]", yLabel: "T [eV]", yLog: true, series: pick("T") },
  ];
  return renderFigure(panels);
}

export function renderNamedFigure(name: FigureName, runDir: string): string {
  switch (name) {
    case "snapshots": return figureSnapshots(runDir);
    case "cost-curves": return figureCostCurves(runDir);
    case "recon-initial": return figureReconInitial(runDir);
    case "final-compare": return figureFinalCompare(runDir);
  }
}
