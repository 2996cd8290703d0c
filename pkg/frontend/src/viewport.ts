/** Per-pane pan/zoom between image pixel coordinates and device pixels.
 *
 * Panes are intentionally not synchronized: the webcam image and the mesh
 * render have different geometry, and precise picking needs independent zoom.
 */

export interface Viewport {
  scale: number; // device pixels per image pixel
  offsetX: number; // device position of image pixel (0, 0)
  offsetY: number;
}

export const identityViewport = (): Viewport => ({ scale: 1, offsetX: 0, offsetY: 0 });

export function imageToDevice(vp: Viewport, u: number, v: number): [number, number] {
  return [vp.offsetX + u * vp.scale, vp.offsetY + v * vp.scale];
}

export function deviceToImage(vp: Viewport, x: number, y: number): [number, number] {
  return [(x - vp.offsetX) / vp.scale, (y - vp.offsetY) / vp.scale];
}

export function panBy(vp: Viewport, dx: number, dy: number): Viewport {
  return { ...vp, offsetX: vp.offsetX + dx, offsetY: vp.offsetY + dy };
}

/** Zoom by `factor` keeping the device point (x, y) anchored on the same
 * image pixel. */
export function zoomAt(vp: Viewport, factor: number, x: number, y: number): Viewport {
  const scale = Math.min(64, Math.max(1 / 64, vp.scale * factor));
  const applied = scale / vp.scale;
  return {
    scale,
    offsetX: x - (x - vp.offsetX) * applied,
    offsetY: y - (y - vp.offsetY) * applied,
  };
}

/** Fit an image of (w, h) pixels into a pane of (pw, ph) device pixels. */
export function fitViewport(w: number, h: number, pw: number, ph: number): Viewport {
  const scale = Math.min(pw / w, ph / h);
  return {
    scale,
    offsetX: (pw - w * scale) / 2,
    offsetY: (ph - h * scale) / 2,
  };
}
