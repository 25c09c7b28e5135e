// Client-side colormapping of the server's grayscale heatmap PNG.
// One server render serves all color schemes: the PNG holds normalized
// distances, min/max arrive in the match response JSON.

export interface ColormappedPixel {
  r: number;
  g: number;
  b: number;
  a: number;
}

/** Dark blue (near) to yellow (far), alpha fades near the match. */
export function colormap(normalized: number, opacity: number): ColormappedPixel {
  const t = Math.min(1, Math.max(0, normalized));
  const r = Math.round(255 * Math.min(1, 1.6 * t));
  const g = Math.round(255 * Math.min(1, 1.4 * t * t + 0.1 * (1 - t)));
  const b = Math.round(255 * (1 - 0.85 * t));
  const a = Math.round(255 * opacity * (0.25 + 0.75 * t));
  return { r, g, b, a };
}

/** Map grayscale bytes (0..255 = min..max distance) to RGBA overlay bytes. */
export function colormapGray(gray: Uint8ClampedArray | number[], opacity: number): Uint8ClampedArray {
  const out = new Uint8ClampedArray(gray.length * 4);
  for (let i = 0; i < gray.length; i++) {
    const c = colormap(gray[i] / 255, opacity);
    out[4 * i] = c.r;
    out[4 * i + 1] = c.g;
    out[4 * i + 2] = c.b;
    out[4 * i + 3] = c.a;
  }
  return out;
}

/** Real distance at a heatmap byte, reconstructed from the response min/max. */
export function grayToDistance(grayByte: number, min: number, max: number): number {
  return min + (grayByte / 255) * (max - min);
}
