/**
 * The four figure kinds, file-in / string-out; no science is recomputed --
 * every plotted value is lifted from the CSV (and echoed in data-*
 * attributes as the exact source text).
 */

import { readFileSync } from "fs";
import { z } from "zod";
import { column, numeric, readCsv, requireColumns, SchemaError, Table } from "./csv.js";
import { colormap, makeScale, Svg } from "./svg.js";

export interface FigureSpec {
  kind: "monotone_curve" | "epsreg_scatter" | "field_heatmap" | "convergence";
  input: string;
  summary?: string;
  xcol?: string;
  ycol?: string;
  vcol?: string;
}

export interface RenderResult {
  svg: string;
  /** plotted series as [column name, source strings] for auditability */
  series: Record<string, string[]>;
}

const MARGIN = { left: 64, right: 20, top: 20, bottom: 48 };

function frame(svg: Svg): { x: [number, number]; y: [number, number] } {
  return {
    x: [MARGIN.left, svg.width - MARGIN.right],
    y: [svg.height - MARGIN.bottom, MARGIN.top],
  };
}

function pad(lo: number, hi: number, f = 0.06): [number, number] {
  const d = (hi - lo) || Math.abs(hi) || 1;
  return [lo - f * d, hi + f * d];
}

export function renderFigure(spec: FigureSpec): RenderResult {
  switch (spec.kind) {
    case "monotone_curve":
      return monotoneCurve(spec);
    case "epsreg_scatter":
      return epsregScatter(spec);
    case "field_heatmap":
      return fieldHeatmap(spec);
    case "convergence":
      return convergence(spec);
    default:
      throw new SchemaError(`unknown figure kind '${(spec as FigureSpec).kind}'`);
  }
}

function monotoneCurve(spec: FigureSpec): RenderResult {
  const t = readCsv(spec.input);
  requireColumns(t, ["tau", "V_domain", "est_error"], spec.input);
  const tauS = column(t, "tau");
  const vS = column(t, "V_domain");
  const eS = column(t, "est_error");
  const tau = numeric(tauS, "tau");
  const v = numeric(vS, "V_domain");
  const err = numeric(eS, "est_error");

  const svg = new Svg();
  const f = frame(svg);
  const x = makeScale(pad(Math.min(...tau), Math.max(...tau)), f.x);
  const lo = Math.min(...v.map((a, i) => a - err[i]));
  const hi = Math.max(...v.map((a, i) => a + err[i]));
  const y = makeScale(pad(Math.min(lo, 0.995), Math.max(hi, 1.0005)), f.y);

  const band = tau.map((a, i) => `${x(a)},${y(v[i] + err[i])}`).join(" ")
    + " " + [...tau.keys()].reverse()
      .map((i) => `${x(tau[i])},${y(v[i] - err[i])}`).join(" ");
  svg.add("polygon", { points: band, fill: "#9ecae1", opacity: 0.5 });
  svg.add("polyline", {
    points: tau.map((a, i) => `${x(a)},${y(v[i])}`).join(" "),
    fill: "none", stroke: "#08519c", "stroke-width": 1.5,
  });
  tau.forEach((a, i) => {
    svg.add("circle", {
      cx: x(a), cy: y(v[i]), r: 3, fill: "#08519c",
      "data-x": tauS[i], "data-y": vS[i], "data-err": eS[i],
    });
  });
  svg.axes(x, y, "tau", "reduced volume");
  return { svg: svg.render(), series: { tau: tauS, V_domain: vS, est_error: eS } };
}

const FrontierSchema = z.object({
  rm_convention: z.string(),
  n_records: z.number(),
  frontier: z.array(z.object({
    eps: z.number(),
    n_records: z.number(),
    min_ratio: z.number().nullable(),
  })),
});

function epsregScatter(spec: FigureSpec): RenderResult {
  const t = readCsv(spec.input);
  requireColumns(t, ["V_r2", "ratio"], spec.input);
  const vS = column(t, "V_r2");
  const rS = column(t, "ratio");
  const v = numeric(vS, "V_r2");
  const ratio = numeric(rS, "ratio");
  // x = 1 - V on a log axis; values at/over 1 are clamped to the axis edge
  const gaps = v.map((a) => Math.max(1 - a, 1e-12));

  const svg = new Svg();
  const f = frame(svg);
  const x = makeScale([Math.min(...gaps) / 2, Math.max(...gaps, 1) * 1.5],
                      f.x, true);
  const y = makeScale([0, Math.max(...ratio) * 1.08], f.y);

  if (spec.summary) {
    const parsed = FrontierSchema.parse(
      JSON.parse(readFileSync(spec.summary, "utf-8")));
    const pts = parsed.frontier
      .filter((d) => d.min_ratio !== null)
      .map((d) => `${x(Math.max(d.eps, 1e-12))},${y(d.min_ratio as number)}`);
    if (pts.length > 1) {
      svg.add("polyline", { points: pts.join(" "), fill: "none",
                            stroke: "#d62728", "stroke-width": 1.5,
                            "stroke-dasharray": "5 3", class: "frontier" });
    }
  }
  ratio.forEach((r, i) => {
    svg.add("circle", {
      cx: x(gaps[i]), cy: y(r), r: 3.5, fill: "#2ca02c", opacity: 0.75,
      "data-x": vS[i], "data-y": rS[i],
    });
  });
  svg.add("line", { x1: f.x[0], y1: y(1), x2: f.x[1], y2: y(1),
                    stroke: "#999", "stroke-dasharray": "2 3" });
  svg.axes(x, y, "1 - V(r^2)", "r_Rm / r");
  return { svg: svg.render(), series: { V_r2: vS, ratio: rS } };
}

function fieldHeatmap(spec: FigureSpec): RenderResult {
  const t = readCsv(spec.input);
  const xcol = spec.xcol ?? t.columns[0];
  const ycol = spec.ycol ?? t.columns[1];
  const vcol = spec.vcol ?? "ell";
  requireColumns(t, [xcol, ycol, vcol], spec.input);
  const xS = column(t, xcol);
  const yS = column(t, ycol);
  const vS = column(t, vcol);
  const xs = numeric(xS, xcol);
  const ys = numeric(yS, ycol);
  const vs = numeric(vS, vcol);

  const ux = [...new Set(xs)].sort((a, b) => a - b);
  const uy = [...new Set(ys)].sort((a, b) => a - b);
  if (ux.length < 2 || uy.length < 2) {
    throw new SchemaError("schema-mismatch: heatmap needs a 2D grid");
  }
  const svg = new Svg();
  const f = frame(svg);
  const x = makeScale([ux[0], ux[ux.length - 1]], f.x);
  const y = makeScale([uy[0], uy[uy.length - 1]], f.y);
  const vlo = Math.min(...vs);
  const vhi = Math.max(...vs);
  const wx = (f.x[1] - f.x[0]) / (ux.length - 1);
  const wy = (f.y[0] - f.y[1]) / (uy.length - 1);
  vs.forEach((val, i) => {
    svg.add("rect", {
      x: x(xs[i]) - wx / 2, y: y(ys[i]) - wy / 2, width: wx, height: wy,
      fill: colormap((val - vlo) / (vhi - vlo || 1)),
      "data-x": xS[i], "data-y": yS[i], "data-v": vS[i],
    });
  });
  svg.axes(x, y, xcol, ycol);
  return { svg: svg.render(),
           series: { [xcol]: xS, [ycol]: yS, [vcol]: vS } };
}

function convergence(spec: FigureSpec): RenderResult {
  const t = readCsv(spec.input);
  if (t.columns.length < 2) {
    throw new SchemaError("schema-mismatch: convergence needs h plus series");
  }
  const hcol = t.columns[0];
  const hS = column(t, hcol);
  const h = numeric(hS, hcol);
  const svg = new Svg();
  const f = frame(svg);
  let vAll: number[] = [];
  const seriesCols = t.columns.slice(1);
  const cols: Record<string, string[]> = { [hcol]: hS };
  for (const c of seriesCols) {
    cols[c] = column(t, c);
    vAll = vAll.concat(numeric(cols[c], c));
  }
  const x = makeScale([Math.min(...h) / 1.3, Math.max(...h) * 1.3], f.x, true);
  const y = makeScale([Math.min(...vAll) / 1.5, Math.max(...vAll) * 1.5],
                      f.y, true);
  const palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
  seriesCols.forEach((c, k) => {
    const vals = numeric(cols[c], c);
    svg.add("polyline", {
      points: h.map((a, i) => `${x(a)},${y(vals[i])}`).join(" "),
      fill: "none", stroke: palette[k % palette.length], "stroke-width": 1.5,
    });
    vals.forEach((val, i) => {
      svg.add("circle", { cx: x(h[i]), cy: y(val), r: 3,
                          fill: palette[k % palette.length],
                          "data-x": hS[i], "data-y": cols[c][i],
                          "data-series": c });
    });
  });
  // second-order reference slope through the last point
  const vals0 = numeric(cols[seriesCols[0]], seriesCols[0]);
  const ref = h.map((a) => vals0[h.length - 1] * (a / h[h.length - 1]) ** 2);
  svg.add("polyline", {
    points: h.map((a, i) => `${x(a)},${y(ref[i])}`).join(" "),
    fill: "none", stroke: "#999", "stroke-dasharray": "4 3",
  });
  svg.axes(x, y, hcol, "residual");
  return { svg: svg.render(), series: cols };
}
