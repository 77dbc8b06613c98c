/** Canvas rendering: nearest-neighbor upscale of the query raster. */

import { QueryPayload } from "./api.js";
import { decodeBase64Pixels, fitFactor, grayToRgba } from "./decode.js";

export function renderQuery(
  canvas: HTMLCanvasElement,
  query: QueryPayload,
  maxSide = 320,
): void {
  const gray = decodeBase64Pixels(query.pixels);
  const factor = fitFactor(query.width, query.height, maxSide);
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;

  const raster = new ImageData(query.width, query.height);
  raster.data.set(grayToRgba(gray));
  const off = document.createElement("canvas");
  off.width = query.width;
  off.height = query.height;
  const offCtx = off.getContext("2d");
  if (offCtx === null) return;
  offCtx.putImageData(raster, 0, 0);

  canvas.width = query.width * factor;
  canvas.height = query.height * factor;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

export function clearCanvas(canvas: HTMLCanvasElement, text: string): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.fillStyle = "#10131a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#8a93a6";
  ctx.font = "16px system-ui, sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(text, canvas.width / 2, canvas.height / 2);
}
