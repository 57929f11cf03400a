/**
 * reid-extract: run a vision backbone over manifest images and write an
 * embedding store the Python toolkit reads directly.
 *
 *   reid-extract --manifest m.jsonl --backbone resnet50|swin_t --out name
 *                [--weights model.json] [--stats stats.json]
 *                [--batch 8] [--target 224] [--pad-value 0]
 */

import { readFileSync } from "fs";

import { BACKBONE_DIMS, loadBackbone } from "./backbone";
import { extractAll } from "./extract";
import { parseManifest } from "./manifest";
import { DEFAULT_TRANSFORM, TransformConfig } from "./transform";

interface Args {
  manifest: string;
  backbone: string;
  out: string;
  weights?: string;
  stats?: string;
  batch: number;
  target: number;
  padValue: number;
}

function parseArgs(argv: string[]): Args {
  const args: Partial<Args> = { batch: 8, target: 224, padValue: 0 };
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`missing value for ${flag}`);
    switch (flag) {
      case "--manifest":
        args.manifest = value;
        break;
      case "--backbone":
        args.backbone = value;
        break;
      case "--out":
        args.out = value;
        break;
      case "--weights":
        args.weights = value;
        break;
      case "--stats":
        args.stats = value;
        break;
      case "--batch":
        args.batch = parseInt(value, 10);
        break;
      case "--target":
        args.target = parseInt(value, 10);
        break;
      case "--pad-value":
        args.padValue = parseFloat(value);
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  for (const required of ["manifest", "backbone", "out"] as const) {
    if (!args[required]) throw new Error(`--${required} is required`);
  }
  if (!(args.backbone! in BACKBONE_DIMS)) {
    throw new Error(
      `--backbone must be one of ${Object.keys(BACKBONE_DIMS).join(", ")}`,
    );
  }
  if (!Number.isInteger(args.batch) || args.batch! < 1) {
    throw new Error("--batch must be a positive integer");
  }
  return args as Args;
}

function loadStats(path: string): { mean: [number, number, number]; std: [number, number, number] } {
  const data = JSON.parse(readFileSync(path, "utf-8"));
  if (!Array.isArray(data.mean) || data.mean.length !== 3 ||
      !Array.isArray(data.std) || data.std.length !== 3) {
    throw new Error(`stats file ${path} must hold 3-element mean and std arrays`);
  }
  if (data.std.some((s: number) => !(s > 0))) {
    throw new Error("std components must be positive");
  }
  return { mean: data.mean, std: data.std };
}

export async function main(argv: string[]): Promise<number> {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
  try {
    const cfg: TransformConfig = {
      ...DEFAULT_TRANSFORM,
      target: args.target,
      padValue: args.padValue,
      ...(args.stats ? loadStats(args.stats) : {}),
    };
    const rows = parseManifest(args.manifest);
    const backbone = await loadBackbone(args.backbone, args.target, args.weights);
    const result = extractAll(rows, backbone, cfg, args.out, args.batch);
    for (const failure of result.failures) {
      console.error(
        `error: row ${failure.index} (${failure.source}): ${failure.error}`,
      );
    }
    console.log(
      `wrote ${result.written} x ${backbone.dim} vectors to ${args.out}.{meta.jsonl,f32}`,
    );
    return result.failures.length > 0 ? 1 : 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
