/**
 * The image transform, matching the Python toolkit within 1e-3 per pixel
 * (in practice to float64 rounding): aspect-preserving resize so the
 * longer side hits the target, half-pixel-center bilinear interpolation
 * with edge clamping, centered padding with floor(left/top) / ceil
 * (right/bottom) slack, then per-channel (x - mean) / std.
 *
 * Images are float64 arrays in [0, 1], row-major HWC with 3 channels.
 */

export interface FloatImage {
  height: number;
  width: number;
  /** length height * width * 3, row-major HWC */
  data: Float64Array;
}

export interface TransformConfig {
  target: number;
  padValue: number;
  mean: [number, number, number];
  std: [number, number, number];
}

export const DEFAULT_TRANSFORM: TransformConfig = {
  target: 224,
  padValue: 0,
  mean: [0, 0, 0],
  std: [1, 1, 1],
};

function roundHalfAway(x: number): number {
  return Math.floor(x + 0.5);
}

interface AxisWeights {
  lo: Int32Array;
  hi: Int32Array;
  frac: Float64Array;
}

function axisWeights(nIn: number, nOut: number): AxisWeights {
  const lo = new Int32Array(nOut);
  const hi = new Int32Array(nOut);
  const frac = new Float64Array(nOut);
  for (let i = 0; i < nOut; i++) {
    let src = (i + 0.5) * (nIn / nOut) - 0.5;
    if (src < 0) src = 0;
    if (src > nIn - 1) src = nIn - 1;
    const l = Math.floor(src);
    lo[i] = l;
    hi[i] = Math.min(l + 1, nIn - 1);
    frac[i] = src - l;
  }
  return { lo, hi, frac };
}

export function bilinearResize(img: FloatImage, outH: number, outW: number): FloatImage {
  const { height: h, width: w, data } = img;
  if (outH === h && outW === w) {
    return { height: h, width: w, data: new Float64Array(data) };
  }
  const ys = axisWeights(h, outH);
  const xs = axisWeights(w, outW);

  // rows first, then columns (separable)
  const rows = new Float64Array(outH * w * 3);
  for (let i = 0; i < outH; i++) {
    const y0 = ys.lo[i] * w * 3;
    const y1 = ys.hi[i] * w * 3;
    const fy = ys.frac[i];
    const out = i * w * 3;
    for (let j = 0; j < w * 3; j++) {
      rows[out + j] = data[y0 + j] * (1 - fy) + data[y1 + j] * fy;
    }
  }
  const result = new Float64Array(outH * outW * 3);
  for (let i = 0; i < outH; i++) {
    const rowBase = i * w * 3;
    const outBase = i * outW * 3;
    for (let j = 0; j < outW; j++) {
      const x0 = rowBase + xs.lo[j] * 3;
      const x1 = rowBase + xs.hi[j] * 3;
      const fx = xs.frac[j];
      const out = outBase + j * 3;
      for (let c = 0; c < 3; c++) {
        result[out + c] = rows[x0 + c] * (1 - fx) + rows[x1 + c] * fx;
      }
    }
  }
  return { height: outH, width: outW, data: result };
}

export function resizePadSquare(img: FloatImage, cfg: TransformConfig): FloatImage {
  const { height: h, width: w } = img;
  const target = cfg.target;
  let newH: number;
  let newW: number;
  if (h >= w) {
    newH = target;
    newW = Math.max(1, roundHalfAway(w * (target / h)));
  } else {
    newW = target;
    newH = Math.max(1, roundHalfAway(h * (target / w)));
  }
  const content = bilinearResize(img, newH, newW);

  const data = new Float64Array(target * target * 3).fill(cfg.padValue);
  const top = (target - newH) >> 1;
  const left = (target - newW) >> 1;
  for (let i = 0; i < newH; i++) {
    const src = i * newW * 3;
    const dst = ((top + i) * target + left) * 3;
    data.set(content.data.subarray(src, src + newW * 3), dst);
  }
  return { height: target, width: target, data };
}

/** Per-channel (x - mean) / std; stays HWC (layout is internal here). */
export function normalize(img: FloatImage, cfg: TransformConfig): FloatImage {
  const data = new Float64Array(img.data.length);
  for (let i = 0; i < img.data.length; i += 3) {
    for (let c = 0; c < 3; c++) {
      data[i + c] = (img.data[i + c] - cfg.mean[c]) / cfg.std[c];
    }
  }
  return { height: img.height, width: img.width, data };
}

export function transform(img: FloatImage, cfg: TransformConfig): FloatImage {
  return normalize(resizePadSquare(img, cfg), cfg);
}
