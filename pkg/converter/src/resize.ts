/** Bilinear resampling and BT.601 grayscale reduction, both on 8-bit rasters. */

function roundHalfUp(x: number): number {
  return Math.floor(x + 0.5);
}

/**
 * Bilinear resize with pixel-center alignment: source coordinate of output
 * pixel x is (x + 0.5) * (srcW / dstW) - 0.5, clamped to the image.
 */
export function resizeBilinear(
  src: Uint8Array,
  srcH: number,
  srcW: number,
  channels: number,
  dstH: number,
  dstW: number,
): Uint8Array {
  if (srcH === dstH && srcW === dstW) return new Uint8Array(src);
  const out = new Uint8Array(dstH * dstW * channels);
  const scaleY = srcH / dstH;
  const scaleX = srcW / dstW;
  for (let y = 0; y < dstH; y++) {
    const fy = Math.min(Math.max((y + 0.5) * scaleY - 0.5, 0), srcH - 1);
    const y0 = Math.floor(fy);
    const y1 = Math.min(y0 + 1, srcH - 1);
    const wy = fy - y0;
    for (let x = 0; x < dstW; x++) {
      const fx = Math.min(Math.max((x + 0.5) * scaleX - 0.5, 0), srcW - 1);
      const x0 = Math.floor(fx);
      const x1 = Math.min(x0 + 1, srcW - 1);
      const wx = fx - x0;
      for (let c = 0; c < channels; c++) {
        const p00 = src[(y0 * srcW + x0) * channels + c];
        const p01 = src[(y0 * srcW + x1) * channels + c];
        const p10 = src[(y1 * srcW + x0) * channels + c];
        const p11 = src[(y1 * srcW + x1) * channels + c];
        const top = p00 + (p01 - p00) * wx;
        const bottom = p10 + (p11 - p10) * wx;
        out[(y * dstW + x) * channels + c] = roundHalfUp(top + (bottom - top) * wy);
      }
    }
  }
  return out;
}

/** 3-channel to 1-channel: round(0.299 R + 0.587 G + 0.114 B), round half up. */
export function toLuminance(src: Uint8Array, height: number, width: number): Uint8Array {
  const out = new Uint8Array(height * width);
  for (let i = 0; i < height * width; i++) {
    const r = src[3 * i];
    const g = src[3 * i + 1];
    const b = src[3 * i + 2];
    out[i] = Math.min(255, roundHalfUp(0.299 * r + 0.587 * g + 0.114 * b));
  }
  return out;
}
