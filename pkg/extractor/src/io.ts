/**
 * Minimal node filesystem IOHandler for tfjs LayersModels.
 *
 * The browser build of tfjs ships no file:// handlers; this covers the
 * standard layout (model.json with a weightsManifest next to .bin shards)
 * well enough to save and load local checkpoints.
 */

import { mkdirSync, readFileSync, writeFileSync } from "fs";
import { dirname, join } from "path";

import * as tf from "@tensorflow/tfjs";

function toArrayBuffer(buffers: Buffer[]): ArrayBuffer {
  const total = buffers.reduce((sum, buf) => sum + buf.byteLength, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const buf of buffers) {
    out.set(buf, offset);
    offset += buf.byteLength;
  }
  return out.buffer;
}

export function nodeModelIO(modelJsonPath: string): tf.io.IOHandler {
  return {
    async load(): Promise<tf.io.ModelArtifacts> {
      const dir = dirname(modelJsonPath);
      const spec = JSON.parse(readFileSync(modelJsonPath, "utf-8"));
      const artifacts: tf.io.ModelArtifacts = {
        modelTopology: spec.modelTopology,
        format: spec.format,
        generatedBy: spec.generatedBy,
        convertedBy: spec.convertedBy,
      };
      if (spec.trainingConfig) artifacts.trainingConfig = spec.trainingConfig;
      if (spec.weightsManifest) {
        const weightSpecs: tf.io.WeightsManifestEntry[] = [];
        const buffers: Buffer[] = [];
        for (const group of spec.weightsManifest) {
          weightSpecs.push(...group.weights);
          for (const path of group.paths) {
            buffers.push(readFileSync(join(dir, path)));
          }
        }
        artifacts.weightSpecs = weightSpecs;
        artifacts.weightData = toArrayBuffer(buffers);
      }
      return artifacts;
    },

    async save(artifacts: tf.io.ModelArtifacts): Promise<tf.io.SaveResult> {
      const dir = dirname(modelJsonPath);
      mkdirSync(dir, { recursive: true });
      const weightsName = "weights.bin";
      const spec = {
        modelTopology: artifacts.modelTopology,
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
        convertedBy: artifacts.convertedBy,
        trainingConfig: artifacts.trainingConfig,
        weightsManifest: [
          { paths: [weightsName], weights: artifacts.weightSpecs ?? [] },
        ],
      };
      writeFileSync(modelJsonPath, JSON.stringify(spec));
      if (artifacts.weightData) {
        const data = Array.isArray(artifacts.weightData)
          ? toArrayBuffer(artifacts.weightData.map((d) => Buffer.from(d)))
          : artifacts.weightData;
        writeFileSync(join(dir, weightsName), Buffer.from(data as ArrayBuffer));
      }
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: "JSON",
        },
      };
    },
  };
}
