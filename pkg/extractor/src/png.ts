/** PNG loading: 8-bit RGB(A) bytes -> float image in [0, 1]. */

import { readFileSync } from "fs";
import { PNG } from "pngjs";

import { FloatImage } from "./transform";

export function loadPng(path: string): FloatImage {
  const png = PNG.sync.read(readFileSync(path));
  const { width, height, data } = png; // RGBA, 8 bit
  const out = new Float64Array(height * width * 3);
  for (let p = 0; p < height * width; p++) {
    out[p * 3] = data[p * 4] / 255;
    out[p * 3 + 1] = data[p * 4 + 1] / 255;
    out[p * 3 + 2] = data[p * 4 + 2] / 255;
  }
  return { height, width, data: out };
}

export function savePng(img: FloatImage, path: string): void {
  const png = new PNG({ width: img.width, height: img.height });
  for (let p = 0; p < img.height * img.width; p++) {
    for (let c = 0; c < 3; c++) {
      png.data[p * 4 + c] = Math.max(
        0,
        Math.min(255, Math.floor(img.data[p * 3 + c] * 255 + 0.5)),
      );
    }
    png.data[p * 4 + 3] = 255;
  }
  require("fs").writeFileSync(path, PNG.sync.write(png));
}
