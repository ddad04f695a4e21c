/**
 * CSV ingestion with schema checks.
 *
 * Values are kept as the exact strings found in the file; numeric parsing
 * happens only where a coordinate is needed, so anything echoed back into
 * an image attribute round-trips the CSV text verbatim.
 */

import { readFileSync } from "fs";
import Papa from "papaparse";

export class SchemaError extends Error {}

export interface Table {
  columns: string[];
  rows: string[][];
}

export function readCsv(path: string): Table {
  const text = readFileSync(path, "utf-8");
  const parsed = Papa.parse<string[]>(text.trim(), {
    dynamicTyping: false,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new SchemaError(`csv parse error in ${path}: ${parsed.errors[0].message}`);
  }
  const data = parsed.data as string[][];
  if (data.length < 2) {
    throw new SchemaError(`csv ${path} has no data rows`);
  }
  return { columns: data[0], rows: data.slice(1) };
}

export function requireColumns(table: Table, names: string[], path = ""): void {
  for (const name of names) {
    if (!table.columns.includes(name)) {
      throw new SchemaError(`schema-mismatch: missing column '${name}' ${path}`);
    }
  }
}

export function column(table: Table, name: string): string[] {
  const k = table.columns.indexOf(name);
  if (k < 0) {
    throw new SchemaError(`schema-mismatch: missing column '${name}'`);
  }
  return table.rows.map((r) => r[k]);
}

export function numeric(values: string[], name: string): number[] {
  return values.map((v) => {
    const x = Number(v);
    if (v === "" || Number.isNaN(x)) {
      throw new SchemaError(`schema-mismatch: non-numeric value '${v}' in '${name}'`);
    }
    return x;
  });
}
