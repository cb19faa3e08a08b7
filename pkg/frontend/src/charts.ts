// Minimal SVG renderings. All analysis happens server-side; these draw the
// served numbers and label every point with its exact value so tests can
// assert byte equality between feed and page.

import { fmt } from "./render-util.js";

export interface SeriesPoint {
  x: number;
  y: number;
  label: string; // exact served value text
}

export function lineChart(points: SeriesPoint[], opts?: {
  width?: number; height?: number; title?: string;
}): string {
  const width = opts?.width ?? 420;
  const height = opts?.height ?? 140;
  if (points.length === 0) {
    return `<svg class="chart" width="${width}" height="${height}" role="img"></svg>`;
  }
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(0, ...ys);
  const yMax = Math.max(1e-9, ...ys);
  const pad = 18;
  const sx = (x: number) =>
    xMax === xMin ? width / 2 : pad + ((x - xMin) / (xMax - xMin)) * (width - 2 * pad);
  const sy = (y: number) =>
    height - pad - ((y - yMin) / (yMax - yMin)) * (height - 2 * pad);
  const path = points
    .map((p, i) => `${i === 0 ? "M" : "L"}${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`)
    .join(" ");
  const dots = points
    .map(
      (p) =>
        `<circle cx="${sx(p.x).toFixed(1)}" cy="${sy(p.y).toFixed(1)}" r="2.5"></circle>` +
        `<text class="pt" x="${sx(p.x).toFixed(1)}" y="${(sy(p.y) - 6).toFixed(1)}">${p.label}</text>`
    )
    .join("");
  const title = opts?.title ? `<title>${opts.title}</title>` : "";
  return (
    `<svg class="chart" width="${width}" height="${height}" role="img">${title}` +
    `<path d="${path}" fill="none" stroke="currentColor"></path>${dots}</svg>`
  );
}

export function barRow(label: string, value: number, max: number): string {
  const pct = max > 0 ? Math.max(0, Math.min(100, (value / max) * 100)) : 0;
  return (
    `<div class="bar-row"><span class="bar-label">${label}</span>` +
    `<span class="bar" style="width:${pct.toFixed(1)}%"></span>` +
    `<span class="bar-value">${fmt(value)}</span></div>`
  );
}
