/**
 * Vision backbones producing fixed-width feature vectors.
 *
 * Two families are supported, dimensioned like the classification-free
 * feature stages of the standard architectures: resnet50 -> 2048-D,
 * swin_t -> 768-D. Real pretrained weights are loaded from a local tfjs
 * LayersModel directory via --weights (pinned identifiers belong in the
 * README); without weights a small seeded CNN with the family's output
 * width stands in, deterministic across runs and platforms (cpu backend,
 * all weights filled from splitmix64).
 */

import * as tf from "@tensorflow/tfjs";

import { nodeModelIO } from "./io";
import { SplitMix64, seedFromName } from "./splitmix64";
import { FloatImage } from "./transform";

export const BACKBONE_DIMS: Record<string, number> = {
  resnet50: 2048,
  swin_t: 768,
};

export interface Backbone {
  name: string;
  dim: number;
  model: tf.LayersModel;
}

function fillSeededWeights(model: tf.LayersModel, seed: bigint): void {
  const rng = new SplitMix64(seed);
  const replacements = model.getWeights().map((weight) => {
    const shape = weight.shape;
    const size = shape.reduce((a, b) => a * (b ?? 1), 1);
    const fanIn = shape.length > 1 ? size / shape[shape.length - 1]! : size;
    const bound = 1 / Math.sqrt(fanIn);
    const values = new Float32Array(size);
    for (let i = 0; i < size; i++) {
      values[i] = (2 * rng.nextUnitDouble() - 1) * bound;
    }
    return tf.tensor(values, shape as number[]);
  });
  model.setWeights(replacements);
}

function buildSeededBackbone(name: string, target: number): tf.LayersModel {
  const dim = BACKBONE_DIMS[name];
  const model = tf.sequential({
    layers: [
      tf.layers.conv2d({
        inputShape: [target, target, 3],
        filters: 16,
        kernelSize: 7,
        strides: 4,
        activation: "relu",
        padding: "same",
      }),
      tf.layers.maxPooling2d({ poolSize: 2 }),
      tf.layers.conv2d({
        filters: 32,
        kernelSize: 3,
        strides: 2,
        activation: "relu",
        padding: "same",
      }),
      tf.layers.globalAveragePooling2d({}),
      tf.layers.dense({ units: dim, activation: "linear" }),
    ],
  });
  fillSeededWeights(model, seedFromName(name));
  return model;
}

export async function loadBackbone(
  name: string,
  target: number,
  weightsPath?: string,
): Promise<Backbone> {
  if (!(name in BACKBONE_DIMS)) {
    throw new Error(
      `unknown backbone ${name}; expected one of ${Object.keys(BACKBONE_DIMS).join(", ")}`,
    );
  }
  await tf.setBackend("cpu");
  const dim = BACKBONE_DIMS[name];
  let model: tf.LayersModel;
  if (weightsPath) {
    model = await tf.loadLayersModel(nodeModelIO(weightsPath));
    const outShape = model.outputs[0].shape;
    const outDim = outShape[outShape.length - 1];
    if (outDim !== dim) {
      throw new Error(
        `weights at ${weightsPath} produce ${outDim}-D features; ${name} requires ${dim}-D`,
      );
    }
  } else {
    model = buildSeededBackbone(name, target);
  }
  return { name, dim, model };
}

/** Run one batch of normalized HWC canvases through the backbone. */
export function extractBatch(backbone: Backbone, canvases: FloatImage[]): Float32Array[] {
  const target = canvases[0].height;
  const batch = new Float32Array(canvases.length * target * target * 3);
  canvases.forEach((canvas, index) => {
    batch.set(Float32Array.from(canvas.data), index * target * target * 3);
  });
  const input = tf.tensor4d(batch, [canvases.length, target, target, 3]);
  const output = backbone.model.predict(input) as tf.Tensor;
  const values = output.dataSync() as Float32Array;
  input.dispose();
  output.dispose();
  const rows: Float32Array[] = [];
  for (let i = 0; i < canvases.length; i++) {
    rows.push(values.slice(i * backbone.dim, (i + 1) * backbone.dim));
  }
  return rows;
}
