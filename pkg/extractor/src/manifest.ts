/**
 * Extraction manifest: UTF-8 JSONL, one row per instance.
 *
 * Row schema:
 *   {"source": "path/to/crop.png", "fish_id": "...", "species": "...",
 *    "arrangement": "separated"|"touched", "viewpoint": "initial"|"flipped",
 *    "split": "train"|"val"|"test"}
 *
 * Records get record_id = row index. Rows are written to the store in
 * manifest order regardless of inference batching.
 */

import { readFileSync } from "fs";

const ARRANGEMENTS = new Set(["separated", "touched"]);
const VIEWPOINTS = new Set(["initial", "flipped"]);
const SPLITS = new Set(["train", "val", "test"]);

export interface ManifestRow {
  source: string;
  fish_id: string;
  species: string;
  arrangement: string;
  viewpoint: string;
  split: string;
}

export function parseManifest(path: string): ManifestRow[] {
  const rows: ManifestRow[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  lines.forEach((line, index) => {
    if (!line.trim()) return;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`manifest line ${index + 1}: invalid JSON: ${err}`);
    }
    for (const key of ["source", "fish_id", "species", "arrangement", "viewpoint", "split"]) {
      if (typeof obj[key] !== "string") {
        throw new Error(`manifest line ${index + 1}: missing or non-string field ${key}`);
      }
    }
    const row = obj as unknown as ManifestRow;
    if (!ARRANGEMENTS.has(row.arrangement)) {
      throw new Error(`manifest line ${index + 1}: unknown arrangement ${row.arrangement}`);
    }
    if (!VIEWPOINTS.has(row.viewpoint)) {
      throw new Error(`manifest line ${index + 1}: unknown viewpoint ${row.viewpoint}`);
    }
    if (!SPLITS.has(row.split)) {
      throw new Error(`manifest line ${index + 1}: unknown split ${row.split}`);
    }
    rows.push(row);
  });
  if (rows.length === 0) {
    throw new Error("manifest is empty");
  }
  return rows;
}
