// Mapping between displayed canvas coordinates and image pixel coordinates.
// At integer zoom levels the round trip is exact for pixel centers.

export interface ViewTransform {
  zoom: number; // canvas pixels per image pixel
  offsetX: number; // canvas position of image pixel (0, 0)'s top-left corner
  offsetY: number;
}

export function imageToCanvas(t: ViewTransform, u: number, v: number): { x: number; y: number } {
  // pixel centers sit half a cell in from the cell corner
  return {
    x: t.offsetX + (u + 0.5) * t.zoom,
    y: t.offsetY + (v + 0.5) * t.zoom,
  };
}

export function canvasToImage(t: ViewTransform, x: number, y: number): { u: number; v: number } {
  return {
    u: (x - t.offsetX) / t.zoom - 0.5,
    v: (y - t.offsetY) / t.zoom - 0.5,
  };
}

export function canvasToImagePixel(
  t: ViewTransform,
  x: number,
  y: number,
  width: number,
  height: number,
): { u: number; v: number } | null {
  const p = canvasToImage(t, x, y);
  const u = Math.round(p.u);
  const v = Math.round(p.v);
  if (u < 0 || v < 0 || u >= width || v >= height) return null;
  return { u, v };
}

export function fitTransform(
  imgW: number,
  imgH: number,
  canvasW: number,
  canvasH: number,
): ViewTransform {
  // largest integer zoom that fits (at least 1)
  const zoom = Math.max(1, Math.floor(Math.min(canvasW / imgW, canvasH / imgH)));
  return {
    zoom,
    offsetX: Math.floor((canvasW - imgW * zoom) / 2),
    offsetY: Math.floor((canvasH - imgH * zoom) / 2),
  };
}
