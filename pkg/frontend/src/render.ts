// Canvas and SVG rendering helpers. The pure byte/path builders are split
// from the DOM drawing so they can be unit tested without a browser.

import type { ImagePayload } from "./api";

export function rgbaBytes(image: ImagePayload): Uint8ClampedArray<ArrayBuffer> {
  const { h, w, c, data } = image;
  const out = new Uint8ClampedArray(h * w * 4);
  for (let i = 0; i < h * w; i++) {
    for (let ch = 0; ch < 3; ch++) {
      const value = c === 1 ? data[i] : data[i * c + Math.min(ch, c - 1)];
      out[i * 4 + ch] = Math.floor(value * 255 + 0.5);
    }
    out[i * 4 + 3] = 255;
  }
  return out;
}

// Heatmap overlay bytes: normalized attention in [0, max] mapped to a red
// wash whose alpha tracks the weight of the token at each pixel.
export function heatmapBytes(values: number[], h: number, w: number): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(h * w * 4);
  let hi = 0;
  for (const v of values) hi = Math.max(hi, Math.abs(v));
  const scale = hi > 0 ? 1 / hi : 0;
  for (let i = 0; i < h * w; i++) {
    const t = Math.max(0, Math.min(1, Math.abs(values[i]) * scale));
    out[i * 4] = 255;
    out[i * 4 + 1] = 64;
    out[i * 4 + 2] = 32;
    out[i * 4 + 3] = Math.floor(t * 200);
  }
  return out;
}

export function rewardPath(rewards: number[], width: number, height: number): string {
  if (rewards.length === 0) return "";
  const pad = 4;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  const n = rewards.length;
  const x = (i: number) => pad + (n === 1 ? innerW / 2 : (i / (n - 1)) * innerW);
  // rewards live in [-1, 1]; chart pins that range
  const y = (r: number) => pad + (1 - (r + 1) / 2) * innerH;
  return rewards
    .map((r, i) => `${i === 0 ? "M" : "L"}${x(i).toFixed(1)},${y(r).toFixed(1)}`)
    .join(" ");
}

export function drawImageScaled(
  canvas: HTMLCanvasElement,
  image: ImagePayload,
  scale: number,
  overlay?: Uint8ClampedArray<ArrayBuffer>
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  canvas.width = image.w * scale;
  canvas.height = image.h * scale;
  const buffer = document.createElement("canvas");
  buffer.width = image.w;
  buffer.height = image.h;
  const bctx = buffer.getContext("2d");
  if (!bctx) return;
  const base = new ImageData(rgbaBytes(image), image.w, image.h);
  bctx.putImageData(base, 0, 0);
  if (overlay) {
    const over = document.createElement("canvas");
    over.width = image.w;
    over.height = image.h;
    const octx = over.getContext("2d");
    if (octx) {
      octx.putImageData(new ImageData(overlay, image.w, image.h), 0, 0);
      bctx.drawImage(over, 0, 0);
    }
  }
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(buffer, 0, 0, canvas.width, canvas.height);
}
