"""Image preparation: mask-guided cropping, resize-pad-to-square, normalization.

Images are float arrays in [0, 1], row-major HWC with 3 channels; masks are
boolean HxW arrays. All geometry decisions are pinned so that independent
implementations agree:

* scaled short side rounds half away from zero,
* bilinear interpolation uses half-pixel centers with edge clamping and no
  antialias filter,
* canvas slack splits floor(left/top) / ceil(right/bottom),
* pixels inside the crop box but outside the mask are zeroed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass
class TransformConfig:
    target: int = 224
    pad_value: float = 0.0
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def validate(self) -> None:
        if self.target < 2:
            raise ValueError(f"target must be >= 2, got {self.target}")
        if not (0.0 <= self.pad_value <= 1.0):
            raise ValueError(f"pad_value must lie in [0, 1], got {self.pad_value}")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("mean and std must each have 3 components")
        if any(s <= 0 for s in self.std):
            raise ValueError(f"std components must be positive, got {self.std}")


def validate_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must be at least 1x1, got shape {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def crop_instance(img: np.ndarray, mask: np.ndarray, pad: int = 2) -> np.ndarray:
    """Tight bounding box of true mask pixels, expanded by ``pad`` and clipped.

    Background suppression: pixels inside the box but outside the mask are
    zeroed, so the crop carries only the masked instance.
    """
    img = validate_image(img)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.shape[:2]:
        raise ValueError(
            f"mask shape {mask.shape} does not match image shape {img.shape[:2]}"
        )
    if not mask.any():
        raise ValueError("empty mask")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r0 = max(int(rows[0]) - pad, 0)
    r1 = min(int(rows[-1]) + pad, img.shape[0] - 1)
    c0 = max(int(cols[0]) - pad, 0)
    c1 = min(int(cols[-1]) + pad, img.shape[1] - 1)
    out = img[r0 : r1 + 1, c0 : c1 + 1].copy()
    out[~mask[r0 : r1 + 1, c0 : c1 + 1]] = 0.0
    return out


def _round_half_away(x: float) -> int:
    # x is always non-negative here; floor(x + 0.5) implements round-half-away.
    return int(np.floor(x + 0.5))


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with half-pixel centers, clamped at edges."""
    h, w = img.shape[:2]
    if out_h == h and out_w == w:
        return img.copy()

    def axis_weights(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    y0, y1, fy = axis_weights(h, out_h)
    x0, x1, fx = axis_weights(w, out_w)
    rows = img[y0] * (1.0 - fy)[:, None, None] + img[y1] * fy[:, None, None]
    out = rows[:, x0] * (1.0 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    return out


def resize_pad_square(img: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    """Aspect-preserving resize so the longer side equals target, centered on a padded canvas."""
    img = validate_image(img)
    cfg.validate()
    h, w = img.shape[:2]
    target = cfg.target
    if h >= w:
        new_h = target
        new_w = max(1, _round_half_away(w * (target / h)))
    else:
        new_w = target
        new_h = max(1, _round_half_away(h * (target / w)))
    content = bilinear_resize(img, new_h, new_w)

    canvas = np.full((target, target, 3), cfg.pad_value, dtype=np.float64)
    top = (target - new_h) // 2
    left = (target - new_w) // 2
    canvas[top : top + new_h, left : left + new_w] = content
    return canvas


def normalize(img: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    """Per-channel (x - mean) / std, HWC -> CHW."""
    img = validate_image(img)
    cfg.validate()
    if img.shape[0] != cfg.target or img.shape[1] != cfg.target:
        raise ValueError(
            f"expected a {cfg.target}x{cfg.target} canvas, got {img.shape[:2]}"
        )
    mean = np.asarray(cfg.mean, dtype=np.float64)
    std = np.asarray(cfg.std, dtype=np.float64)
    return np.transpose((img - mean) / std, (2, 0, 1))


def denormalize(chw: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    """Inverse of normalize: CHW -> HWC, x * std + mean."""
    cfg.validate()
    chw = np.asarray(chw, dtype=np.float64)
    if chw.ndim != 3 or chw.shape[0] != 3:
        raise ValueError(f"expected 3xHxW tensor, got shape {chw.shape}")
    mean = np.asarray(cfg.mean, dtype=np.float64)
    std = np.asarray(cfg.std, dtype=np.float64)
    return np.transpose(chw, (1, 2, 0)) * std + mean


def compute_stats(images) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population std over all canvas pixels.

    Single documented pass with float64 sum/sum-of-squares accumulators;
    padding pixels are included. Constant channels are rejected since a
    zero std cannot scale anything.
    """
    total = np.zeros(3, dtype=np.float64)
    total_sq = np.zeros(3, dtype=np.float64)
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    n_pixels = 0
    for img in images:
        img = validate_image(img)
        flat = img.reshape(-1, 3)
        total += flat.sum(axis=0)
        total_sq += (flat * flat).sum(axis=0)
        lo = np.minimum(lo, flat.min(axis=0))
        hi = np.maximum(hi, flat.max(axis=0))
        n_pixels += flat.shape[0]
    if n_pixels == 0:
        raise ValueError("empty collection")
    # exact constant detection; the one-pass variance would leave ~1e-17 residue
    if np.any(lo == hi):
        raise ValueError("degenerate std: at least one channel is constant")
    mean = total / n_pixels
    var = np.maximum(total_sq / n_pixels - mean * mean, 0.0)
    std = np.sqrt(var)
    return mean, std


def load_image(path) -> np.ndarray:
    """8-bit RGB PNG -> float image in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_canvas_png(img: np.ndarray, path) -> None:
    """Quantize a float canvas to 8-bit RGB (round half away from zero)."""
    img = validate_image(img)
    data = np.floor(img * 255.0 + 0.5).clip(0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    """Single-channel PNG; nonzero pixels are true."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 0


def rasterize_polygons(polygons, height: int, width: int) -> np.ndarray:
    """Scanline rasterization of polygons with the even-odd fill rule.

    A pixel (r, c) is inside when a horizontal ray from its center
    (c + 0.5, r + 0.5) crosses the combined edge set an odd number of
    times, so overlapping polygons cut holes. Each polygon is a flat
    [x0, y0, x1, y1, ...] list and is closed implicitly.
    """
    mask = np.zeros((height, width), dtype=bool)
    edges = []
    for poly in polygons:
        if len(poly) < 6 or len(poly) % 2 != 0:
            raise ValueError("each polygon needs at least 3 (x, y) pairs")
        pts = np.asarray(poly, dtype=np.float64).reshape(-1, 2)
        nxt = np.roll(pts, -1, axis=0)
        edges.append(np.concatenate([pts, nxt], axis=1))
    if not edges:
        return mask
    e = np.concatenate(edges, axis=0)  # columns: x0, y0, x1, y1
    x0, y0, x1, y1 = e[:, 0], e[:, 1], e[:, 2], e[:, 3]
    for r in range(height):
        yc = r + 0.5
        hit = (y0 <= yc) != (y1 <= yc)  # half-open rule avoids double-counting vertices
        if not hit.any():
            continue
        t = (yc - y0[hit]) / (y1[hit] - y0[hit])
        xs = np.sort(x0[hit] + t * (x1[hit] - x0[hit]))
        cols = np.arange(width) + 0.5
        parity = np.searchsorted(xs, cols, side="left") % 2
        mask[r] = parity == 1
    return mask


def load_mask_json(path) -> np.ndarray:
    """Polygon-mask JSON: {"height": H, "width": W, "segmentation": [[x0, y0, ...], ...]}."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("height", "width", "segmentation"):
        if key not in obj:
            raise ValueError(f"polygon mask JSON missing {key!r}")
    return rasterize_polygons(obj["segmentation"], int(obj["height"]), int(obj["width"]))


def load_mask(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return load_mask_json(path)
    return load_mask_png(path)
