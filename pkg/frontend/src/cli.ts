/**
 * render --kind KIND --in data.csv [--summary frontier.json] --out fig.svg
 *        [--xcol NAME --ycol NAME --vcol NAME]
 *
 * Stateless file-in / file-out; output is SVG (vector).  Exit codes:
 * 0 success, 2 bad arguments or schema mismatch.
 */

import { writeFileSync } from "fs";
import { FigureSpec, renderFigure } from "./figures.js";
import { SchemaError } from "./csv.js";

const KINDS = ["monotone_curve", "epsreg_scatter", "field_heatmap",
               "convergence"] as const;

function parseArgs(argv: string[]): FigureSpec & { out: string } {
  if (argv[0] !== "render") {
    throw new SchemaError(`usage: render --kind <${KINDS.join("|")}> ` +
      `--in data.csv [--summary s.json] --out fig.svg`);
  }
  const opts: Record<string, string> = {};
  for (let i = 1; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || argv[i + 1] === undefined) {
      throw new SchemaError(`bad argument '${argv[i]}'`);
    }
    opts[argv[i].slice(2)] = argv[i + 1];
  }
  const kind = opts["kind"] as FigureSpec["kind"];
  if (!KINDS.includes(kind)) {
    throw new SchemaError(`--kind must be one of ${KINDS.join(", ")}`);
  }
  if (!opts["in"] || !opts["out"]) {
    throw new SchemaError("--in and --out are required");
  }
  if (!opts["out"].endsWith(".svg")) {
    throw new SchemaError("output must be an .svg path (vector output only)");
  }
  return {
    kind,
    input: opts["in"],
    summary: opts["summary"],
    xcol: opts["xcol"],
    ycol: opts["ycol"],
    vcol: opts["vcol"],
    out: opts["out"],
  };
}

export function main(argv: string[]): number {
  let spec: ReturnType<typeof parseArgs>;
  try {
    spec = parseArgs(argv);
    const result = renderFigure(spec);
    writeFileSync(spec.out, result.svg);
    console.log(spec.out);
    return 0;
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 2;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
