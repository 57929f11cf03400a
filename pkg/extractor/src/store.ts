/**
 * Embedding-store writer, byte-compatible with the Python toolkit:
 *
 *   <base>.meta.jsonl — header {"magic":"REIDSTORE","version":1,"dim":D,
 *                       "count":N} then one JSON object per record with
 *                       record_id/fish_id/species/arrangement/viewpoint/
 *                       split/row.
 *   <base>.f32        — raw row-major little-endian float32, N x D; row i
 *                       holds the vector of the record with row == i.
 */

import { writeFileSync } from "fs";

import { ManifestRow } from "./manifest";

export interface StoreRecord {
  recordId: number;
  row: ManifestRow;
  vector: Float32Array;
}

function metaLine(obj: Record<string, unknown>): string {
  // key-sorted, like the Python writer
  const sorted: Record<string, unknown> = {};
  for (const key of Object.keys(obj).sort()) sorted[key] = obj[key];
  return JSON.stringify(sorted);
}

export function storePaths(base: string): { meta: string; blob: string } {
  return { meta: `${base}.meta.jsonl`, blob: `${base}.f32` };
}

export function writeStore(base: string, dim: number, records: StoreRecord[]): void {
  if (dim <= 0) throw new Error(`dim must be positive, got ${dim}`);
  const lines = [
    metaLine({ magic: "REIDSTORE", version: 1, dim, count: records.length }),
  ];
  const blob = Buffer.alloc(records.length * dim * 4);
  const seen = new Set<number>();
  records.forEach((record, row) => {
    if (record.vector.length !== dim) {
      throw new Error(`record ${row}: vector length ${record.vector.length} != dim ${dim}`);
    }
    for (const value of record.vector) {
      if (!Number.isFinite(value)) {
        throw new Error(`record ${row}: vector has non-finite entries`);
      }
    }
    if (seen.has(record.recordId)) {
      throw new Error(`duplicate record_id ${record.recordId}`);
    }
    seen.add(record.recordId);
    lines.push(
      metaLine({
        record_id: record.recordId,
        fish_id: record.row.fish_id,
        species: record.row.species,
        arrangement: record.row.arrangement,
        viewpoint: record.row.viewpoint,
        split: record.row.split,
        row,
      }),
    );
    for (let j = 0; j < dim; j++) {
      blob.writeFloatLE(record.vector[j], (row * dim + j) * 4);
    }
  });
  const paths = storePaths(base);
  writeFileSync(paths.meta, lines.join("\n") + "\n", "utf-8");
  writeFileSync(paths.blob, blob);
}
