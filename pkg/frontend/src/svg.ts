/**
 * Minimal deterministic SVG scene builder (no DOM, no timestamps).
 *
 * Every plotted datum carries data-* attributes holding the source text, so
 * a rendered figure can be audited against its CSV without recomputation.
 */

export interface Scale {
  (x: number): number;
  domain: [number, number];
  range: [number, number];
  log: boolean;
}

export function makeScale(domain: [number, number], range: [number, number],
                          log = false): Scale {
  const [d0, d1] = log ? [Math.log10(domain[0]), Math.log10(domain[1])] : domain;
  const span = d1 - d0 || 1;
  const f = ((x: number) => {
    const t = ((log ? Math.log10(x) : x) - d0) / span;
    return range[0] + t * (range[1] - range[0]);
  }) as Scale;
  f.domain = domain;
  f.range = range;
  f.log = log;
  return f;
}

export function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) return [lo];
  const step = Math.pow(10, Math.floor(Math.log10((hi - lo) / n)));
  const err = (hi - lo) / n / step;
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = mult * step;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12 * s; v += s) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

export function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.floor(Math.log10(lo)); e <= Math.ceil(Math.log10(hi)); e++) {
    const v = Math.pow(10, e);
    if (v >= lo / 1.001 && v <= hi * 1.001) ticks.push(v);
  }
  return ticks.length >= 2 ? ticks : [lo, hi];
}

const esc = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");

export class Svg {
  readonly width: number;
  readonly height: number;
  private parts: string[] = [];

  constructor(width = 640, height = 440) {
    this.width = width;
    this.height = height;
  }

  add(tag: string, attrs: Record<string, string | number>, text?: string): void {
    const a = Object.entries(attrs)
      .map(([k, v]) => `${k}="${esc(String(v))}"`)
      .join(" ");
    this.parts.push(text === undefined
      ? `<${tag} ${a}/>`
      : `<${tag} ${a}>${esc(text)}</${tag}>`);
  }

  axes(x: Scale, y: Scale, xlabel: string, ylabel: string): void {
    const [x0, x1] = x.range;
    const [y0, y1] = y.range;
    this.add("line", { x1: x0, y1: y0, x2: x1, y2: y0, stroke: "#333" });
    this.add("line", { x1: x0, y1: y0, x2: x0, y2: y1, stroke: "#333" });
    const xt = x.log ? logTicks(x.domain[0], x.domain[1])
      : niceTicks(x.domain[0], x.domain[1]);
    for (const v of xt) {
      const px = x(v);
      this.add("line", { x1: px, y1: y0, x2: px, y2: y0 + 4, stroke: "#333" });
      this.add("text", { x: px, y: y0 + 16, "text-anchor": "middle",
                         "font-size": 10 }, formatTick(v));
    }
    const yt = y.log ? logTicks(y.domain[0], y.domain[1])
      : niceTicks(y.domain[0], y.domain[1]);
    for (const v of yt) {
      const py = y(v);
      this.add("line", { x1: x0 - 4, y1: py, x2: x0, y2: py, stroke: "#333" });
      this.add("text", { x: x0 - 6, y: py + 3, "text-anchor": "end",
                         "font-size": 10 }, formatTick(v));
    }
    this.add("text", { x: (x0 + x1) / 2, y: y0 + 32, "text-anchor": "middle",
                       "font-size": 12 }, xlabel);
    this.add("text", { x: x0 - 44, y: (y0 + y1) / 2, "font-size": 12,
                       transform: `rotate(-90 ${x0 - 44} ${(y0 + y1) / 2})`,
                       "text-anchor": "middle" }, ylabel);
  }

  render(): string {
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" ` +
      `height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">\n` +
      `<rect width="${this.width}" height="${this.height}" fill="white"/>\n` +
      this.parts.join("\n") + "\n</svg>\n";
  }
}

export function formatTick(v: number): string {
  if (v !== 0 && (Math.abs(v) >= 1e4 || Math.abs(v) < 1e-3)) {
    return v.toExponential(0);
  }
  return String(Number(v.toPrecision(6)));
}

/** five-stop sequential colormap (dark blue -> yellow) */
export function colormap(t: number): string {
  const stops: [number, number, number][] = [
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
  ];
  const x = Math.max(0, Math.min(1, t)) * (stops.length - 1);
  const i = Math.min(Math.floor(x), stops.length - 2);
  const f = x - i;
  const c = stops[i].map((a, k) => Math.round(a + f * (stops[i + 1][k] - a)));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}
