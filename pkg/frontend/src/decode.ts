/** Pure pixel-payload decoding, kept DOM-free so tests can run in node. */

/** base64 -> raw grayscale bytes. */
export function decodeBase64Pixels(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    out[i] = binary.charCodeAt(i);
  }
  return out;
}

/** Expand grayscale bytes to RGBA for ImageData (opaque alpha). */
export function grayToRgba(gray: Uint8Array): Uint8ClampedArray {
  const rgba = new Uint8ClampedArray(gray.length * 4);
  for (let i = 0; i < gray.length; i++) {
    const v = gray[i];
    const o = i * 4;
    rgba[o] = v;
    rgba[o + 1] = v;
    rgba[o + 2] = v;
    rgba[o + 3] = 255;
  }
  return rgba;
}

/**
 * Nearest-neighbor upscale of a row-major grayscale raster by an integer
 * factor (the canvas path uses drawImage, but this keeps the mapping
 * testable and drives the non-canvas fallback).
 */
export function upscaleNearest(
  gray: Uint8Array,
  width: number,
  height: number,
  factor: number,
): Uint8Array {
  if (factor < 1 || !Number.isInteger(factor)) {
    throw new Error(`factor must be a positive integer, got ${factor}`);
  }
  if (gray.length !== width * height) {
    throw new Error(`expected ${width * height} bytes, got ${gray.length}`);
  }
  const out = new Uint8Array(width * factor * height * factor);
  for (let y = 0; y < height * factor; y++) {
    const srcY = Math.floor(y / factor);
    for (let x = 0; x < width * factor; x++) {
      const srcX = Math.floor(x / factor);
      out[y * width * factor + x] = gray[srcY * width + srcX];
    }
  }
  return out;
}

/** Pick the largest integer zoom that fits the target display size. */
export function fitFactor(width: number, height: number, maxSide: number): number {
  return Math.max(1, Math.floor(maxSide / Math.max(width, height)));
}
