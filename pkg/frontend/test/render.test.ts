/**
 * Renders every figure kind from the golden CSVs and audits the output:
 * plotted series must round-trip the CSV text exactly, and re-rendering
 * must be byte-identical.
 */

import { mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";
import { column, readCsv, SchemaError } from "../src/csv.js";
import { renderFigure } from "../src/figures.js";
import { main as cliMain } from "../src/cli.js";

const GOLDEN = join(__dirname, "..", "golden");

function dataAttrs(svg: string, attr: string): string[] {
  const re = new RegExp(`${attr}="([^"]*)"`, "g");
  const out: string[] = [];
  let m: RegExpExecArray | null;
  while ((m = re.exec(svg)) !== null) out.push(m[1]);
  return out;
}

describe("figure kinds render from golden files", () => {
  it("monotone_curve renders with an error band", () => {
    const res = renderFigure({ kind: "monotone_curve",
                               input: join(GOLDEN, "monotone.csv") });
    expect(res.svg).toContain("<svg");
    expect(res.svg).toContain("polygon"); // the error band
    const t = readCsv(join(GOLDEN, "monotone.csv"));
    expect(dataAttrs(res.svg, "data-x")).toEqual(column(t, "tau"));
    expect(dataAttrs(res.svg, "data-y")).toEqual(column(t, "V_domain"));
    expect(dataAttrs(res.svg, "data-err")).toEqual(column(t, "est_error"));
  });

  it("epsreg_scatter renders with the frontier overlay", () => {
    const res = renderFigure({
      kind: "epsreg_scatter",
      input: join(GOLDEN, "scan.csv"),
      summary: join(GOLDEN, "frontier.json"),
    });
    expect(res.svg).toContain('class="frontier"');
    const t = readCsv(join(GOLDEN, "scan.csv"));
    expect(dataAttrs(res.svg, "data-x")).toEqual(column(t, "V_r2"));
    expect(dataAttrs(res.svg, "data-y")).toEqual(column(t, "ratio"));
  });

  it("field_heatmap renders one cell per node", () => {
    const res = renderFigure({ kind: "field_heatmap",
                               input: join(GOLDEN, "field.csv"),
                               xcol: "theta", ycol: "z" });
    const t = readCsv(join(GOLDEN, "field.csv"));
    expect(dataAttrs(res.svg, "data-v")).toEqual(column(t, "ell"));
    expect((res.svg.match(/<rect/g) ?? []).length).toBeGreaterThan(
      t.rows.length);
  });

  it("convergence renders log-log series", () => {
    const res = renderFigure({ kind: "convergence",
                               input: join(GOLDEN, "convergence.csv") });
    const t = readCsv(join(GOLDEN, "convergence.csv"));
    expect(dataAttrs(res.svg, "data-y")).toEqual(column(t, "max_residual"));
  });
});

describe("invariants", () => {
  it("rendering twice is byte-identical with identical dimensions", () => {
    const spec = { kind: "monotone_curve" as const,
                   input: join(GOLDEN, "monotone.csv") };
    const a = renderFigure(spec);
    const b = renderFigure(spec);
    expect(a.svg).toEqual(b.svg);
    expect(a.svg).toMatch(/width="640" height="440"/);
  });

  it("series echo the csv values without recomputation", () => {
    const res = renderFigure({ kind: "epsreg_scatter",
                               input: join(GOLDEN, "scan.csv") });
    const t = readCsv(join(GOLDEN, "scan.csv"));
    expect(res.series["V_r2"]).toEqual(column(t, "V_r2"));
    expect(res.series["ratio"]).toEqual(column(t, "ratio"));
  });
});

describe("error handling", () => {
  it("missing V_r2 column is a schema mismatch", () => {
    const dir = mkdtempSync(join(tmpdir(), "lgeo-fig-"));
    const bad = join(dir, "bad.csv");
    writeFileSync(bad, "a,b\n1,2\n");
    expect(() => renderFigure({ kind: "epsreg_scatter", input: bad }))
      .toThrow(SchemaError);
    expect(() => renderFigure({ kind: "epsreg_scatter", input: bad }))
      .toThrow(/missing column 'V_r2'/);
  });

  it("cli writes the svg and enforces the extension", () => {
    const dir = mkdtempSync(join(tmpdir(), "lgeo-fig-"));
    const out = join(dir, "fig.svg");
    const code = cliMain(["render", "--kind", "monotone_curve",
                          "--in", join(GOLDEN, "monotone.csv"),
                          "--out", out]);
    expect(code).toBe(0);
    expect(readFileSync(out, "utf-8")).toContain("</svg>");
    const code2 = cliMain(["render", "--kind", "monotone_curve",
                           "--in", join(GOLDEN, "monotone.csv"),
                           "--out", join(dir, "fig.png")]);
    expect(code2).toBe(2);
  });
});
