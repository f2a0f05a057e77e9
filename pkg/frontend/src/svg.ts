/**
 * Minimal deterministic SVG line charts: multi-panel layout, linear or
 * log-10 y axes, fixed palette. No DOM, no timestamps, byte-stable output.
 */

export interface Series {
  label: string;
  x: number[];
  y: number[];
}

export interface PanelSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  yLog?: boolean;
  series: Series[];
}

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const PANEL_W = 420;
const PANEL_H = 320;
const MARGIN = { top: 36, right: 16, bottom: 48, left: 72 };

function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    return v.toExponential(0).replace("+", "");
  }
  return String(parseFloat(v.toPrecision(6)));
}

function niceStep(span: number): number {
  const raw = span / 5;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const frac = raw / mag;
  const nice = frac < 1.5 ? 1 : frac < 3.5 ? 2 : frac < 7.5 ? 5 : 10;
  return nice * mag;
}

function linearTicks(lo: number, hi: number): number[] {
  if (!(hi > lo)) return [lo];
  const step = niceStep(hi - lo);
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-12 * step; v += step) {
    ticks.push(Math.abs(v) < 1e-12 * step ? 0 : v);
  }
  return ticks;
}

function logTicks(lo: number, hi: number): number[] {
  const e0 = Math.ceil(Math.log10(lo) - 1e-12);
  const e1 = Math.floor(Math.log10(hi) + 1e-12);
  const every = Math.max(1, Math.ceil((e1 - e0) / 8));
  const ticks: number[] = [];
  for (let e = e0; e <= e1; e += every) ticks.push(Math.pow(10, e));
  return ticks.length > 0 ? ticks : [lo, hi];
}

interface Scale {
  (v: number): number;
  ticks: number[];
}

function makeScale(lo: number, hi: number, outLo: number, outHi: number, log: boolean): Scale {
  if (log) {
    const l0 = Math.log10(lo);
    const l1 = Math.log10(hi);
    const span = l1 - l0 || 1;
    const f = (v: number) => outLo + ((Math.log10(v) - l0) / span) * (outHi - outLo);
    return Object.assign(f, { ticks: logTicks(lo, hi) });
  }
  const span = hi - lo || 1;
  const f = (v: number) => outLo + ((v - lo) / span) * (outHi - outLo);
  return Object.assign(f, { ticks: linearTicks(lo, hi) });
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function r2(v: number): string {
  return (Math.round(v * 100) / 100).toFixed(2);
}

function renderPanel(panel: PanelSpec, xOff: number): string {
  const x0 = xOff + MARGIN.left;
  const x1 = xOff + PANEL_W - MARGIN.right;
  const y0 = PANEL_H - MARGIN.bottom;
  const y1 = MARGIN.top;

  // drop non-plottable points (log axis cannot show y <= 0)
  const cleaned = panel.series.map((s) => {
    const pts: Array<[number, number]> = [];
    for (let i = 0; i < s.x.length; i++) {
      const xv = s.x[i];
      const yv = s.y[i];
      if (!Number.isFinite(xv) || !Number.isFinite(yv)) continue;
      if (panel.yLog && yv <= 0) continue;
      pts.push([xv, yv]);
    }
    return { label: s.label, pts };
  });
  const all = cleaned.flatMap((s) => s.pts);
  if (all.length === 0) {
    throw new Error(`panel "${panel.title}": no plottable points`);
  }
  const xs = all.map((p) => p[0]);
  const ys = all.map((p) => p[1]);
  const sx = makeScale(Math.min(...xs), Math.max(...xs), x0, x1, false);
  const sy = makeScale(Math.min(...ys), Math.max(...ys), y0, y1, panel.yLog ?? false);

  const parts: string[] = [];
  parts.push(`<rect x="${x0}" y="${y1}" width="${x1 - x0}" height="${y0 - y1}" fill="none" stroke="#333"/>`);
  parts.push(`<text x="${(x0 + x1) / 2}" y="${y1 - 12}" text-anchor="middle" font-size="14" font-weight="bold">${esc(panel.title)}</text>`);
  for (const t of sx.ticks) {
    const px = r2(sx(t));
    parts.push(`<line x1="${px}" y1="${y0}" x2="${px}" y2="${y0 + 5}" stroke="#333"/>`);
    parts.push(`<text x="${px}" y="${y0 + 18}" text-anchor="middle" font-size="10">${esc(fmtTick(t))}</text>`);
  }
  for (const t of sy.ticks) {
    const py = r2(sy(t));
    parts.push(`<line x1="${x0 - 5}" y1="${py}" x2="${x0}" y2="${py}" stroke="#333"/>`);
    parts.push(`<text x="${x0 - 8}" y="${py}" text-anchor="end" dominant-baseline="middle" font-size="10">${esc(fmtTick(t))}</text>`);
  }
  parts.push(`<text x="${(x0 + x1) / 2}" y="${PANEL_H - 10}" text-anchor="middle" font-size="12">${esc(panel.xLabel)}</text>`);
  parts.push(`<text x="${xOff + 16}" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 ${xOff + 16} ${(y0 + y1) / 2})">${esc(panel.yLabel)}</text>`);

  cleaned.forEach((s, i) => {
    if (s.pts.length === 0) return;
    const color = PALETTE[i % PALETTE.length];
    const d = s.pts.map(([xv, yv]) => `${r2(sx(xv))},${r2(sy(yv))}`).join(" ");
    parts.push(`<polyline points="${d}" fill="none" stroke="${color}" stroke-width="1.5"/>`);
    const ly = y1 + 14 + i * 14;
    parts.push(`<line x1="${x1 - 110}" y1="${ly}" x2="${x1 - 90}" y2="${ly}" stroke="${color}" stroke-width="1.5"/>`);
    parts.push(`<text x="${x1 - 85}" y="${ly + 4}" font-size="10">${esc(s.label)}</text>`);
  });
  return parts.join("\n");
}

export function renderFigure(panels: PanelSpec[]): string {
  const width = PANEL_W * panels.length;
  const body = panels.map((p, i) => renderPanel(p, i * PANEL_W)).join("\n");
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${PANEL_H}" viewBox="0 0 ${width} ${PANEL_H}" font-family="Helvetica, Arial, sans-serif">`,
    `<rect width="${width}" height="${PANEL_H}" fill="white"/>`,
    body,
    `</svg>`,
    ``,
  ].join("\n");
}
