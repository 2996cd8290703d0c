/** Build the webcam-pane overlay draw list from session state.
 *
 * Green = clicked 2D targets, orange = current-estimate projections,
 * thin lines join each projection to its target (the residual).
 */

import { AnnotationSession } from "./session.js";
import { imageToDevice, Viewport } from "./viewport.js";

export const TARGET_COLOR = "#2ecc40"; // green targets
export const PROJECTION_COLOR = "#ff851b"; // orange projections
export const PENDING_COLOR = "#ffdc00";

export interface Marker {
  kind: "target" | "projection" | "pending";
  x: number; // device pixels
  y: number;
  color: string;
  label: string;
}

export interface ResidualLine {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  l1: number;
}

export interface Overlay {
  markers: Marker[];
  lines: ResidualLine[];
}

export function buildWebcamOverlay(session: AnnotationSession, vp: Viewport): Overlay {
  const markers: Marker[] = [];
  const lines: ResidualLine[] = [];

  session.correspondences.forEach((c, i) => {
    const [x, y] = imageToDevice(vp, c.u, c.v);
    markers.push({ kind: "target", x, y, color: TARGET_COLOR, label: `${i}` });
  });

  const residuals = session.lastOptimize?.residuals ?? [];
  residuals.forEach((r, i) => {
    const [px, py] = imageToDevice(vp, r.pu, r.pv);
    const [tx, ty] = imageToDevice(vp, r.u, r.v);
    markers.push({ kind: "projection", x: px, y: py, color: PROJECTION_COLOR, label: `${i}` });
    lines.push({ x1: px, y1: py, x2: tx, y2: ty, l1: r.l1 });
  });

  if (session.pendingPick) {
    const [x, y] = imageToDevice(vp, session.pendingPick.u, session.pendingPick.v);
    markers.push({ kind: "pending", x, y, color: PENDING_COLOR, label: "?" });
  }
  return { markers, lines };
}
