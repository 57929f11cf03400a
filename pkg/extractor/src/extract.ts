/**
 * Extraction pipeline: manifest rows -> transform -> backbone -> store.
 *
 * Rows are written in manifest order regardless of inference batching;
 * record_id is the manifest row index, so skipped (failed) rows leave
 * identifiable gaps while store rows stay contiguous.
 */

import { Backbone, extractBatch } from "./backbone";
import { ManifestRow } from "./manifest";
import { loadPng } from "./png";
import { StoreRecord, writeStore } from "./store";
import { TransformConfig, transform } from "./transform";

export interface ExtractionResult {
  written: number;
  failures: { index: number; source: string; error: string }[];
}

export function extractAll(
  rows: ManifestRow[],
  backbone: Backbone,
  cfg: TransformConfig,
  outBase: string,
  batchSize: number,
): ExtractionResult {
  const failures: ExtractionResult["failures"] = [];
  const prepared: { index: number; row: ManifestRow; canvas: ReturnType<typeof transform> }[] = [];
  rows.forEach((row, index) => {
    try {
      prepared.push({ index, row, canvas: transform(loadPng(row.source), cfg) });
    } catch (err) {
      failures.push({ index, source: row.source, error: String(err) });
    }
  });

  const records: StoreRecord[] = [];
  for (let start = 0; start < prepared.length; start += batchSize) {
    const chunk = prepared.slice(start, start + batchSize);
    const vectors = extractBatch(backbone, chunk.map((item) => item.canvas));
    chunk.forEach((item, offset) => {
      records.push({ recordId: item.index, row: item.row, vector: vectors[offset] });
    });
  }
  writeStore(outBase, backbone.dim, records);
  return { written: records.length, failures };
}
