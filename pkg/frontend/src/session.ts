/** Annotation session state machine.
 *
 * The state is a pure function of API state plus uncommitted picks: every
 * mutation goes through the service and is followed by a refresh of the
 * correspondence mirror, so reloading the page reproduces the view.
 */

import { ApiClient, ApiError } from "./api.js";
import type { CorrespondenceDto, OptimizeResultDto, Point2 } from "./types.js";

export type Notice =
  | { kind: "idle" }
  | { kind: "pending"; message: string }
  | { kind: "rejected"; message: string } // e.g. sky pick: visual rejection cue
  | { kind: "error"; message: string };

export class AnnotationSession {
  project: string;
  camera: string;
  /** Webcam-pane click awaiting its 3D pair; not yet a correspondence. */
  pendingPick: Point2 | null = null;
  /** Mirror of the service's correspondence list. */
  correspondences: CorrespondenceDto[] = [];
  lastOptimize: OptimizeResultDto | null = null;
  notice: Notice = { kind: "idle" };
  /** Incremented whenever the camera estimate changes (render cache bust). */
  renderBump = 0;

  constructor(
    private api: ApiClient,
    project: string,
    camera: string,
  ) {
    this.project = project;
    this.camera = camera;
  }

  async refresh(): Promise<void> {
    this.correspondences = await this.api.listCorrespondences(this.project, this.camera);
  }

  /** Click on the webcam pane: records the 2D target and waits for its pair. */
  clickWebcam(u: number, v: number): void {
    this.pendingPick = { u, v };
    this.notice = {
      kind: "pending",
      message: `target (${u.toFixed(1)}, ${v.toFixed(1)}) — now pick the matching 3D point on the render`,
    };
  }

  /** Click on the render pane: resolves the 3D point and commits the pair.
   * A correspondence is committed only when both picks exist. */
  async clickRender(u: number, v: number): Promise<boolean> {
    if (!this.pendingPick) {
      this.notice = { kind: "rejected", message: "click the webcam image first" };
      return false;
    }
    let p3d;
    try {
      p3d = await this.api.pick3d(this.project, this.camera, u, v);
    } catch (e) {
      if (e instanceof ApiError && e.status === 404) {
        this.notice = { kind: "rejected", message: "sky pixel: no geometry under the pick" };
        return false; // pending pick survives; user re-picks on geometry
      }
      this.notice = { kind: "error", message: String(e) };
      return false;
    }
    const { u: tu, v: tv } = this.pendingPick;
    try {
      await this.api.addCorrespondence(this.project, this.camera, p3d, tu, tv);
    } catch (e) {
      this.notice = { kind: "error", message: String(e) };
      return false;
    }
    this.pendingPick = null;
    this.notice = { kind: "idle" };
    await this.refresh();
    return true;
  }

  async remove(index: number): Promise<void> {
    try {
      await this.api.deleteCorrespondence(this.project, this.camera, index);
    } catch (e) {
      this.notice = { kind: "error", message: String(e) };
      return;
    }
    // indices shift after deletion; stale residuals must not be drawn
    this.lastOptimize = null;
    await this.refresh();
  }

  async optimize(): Promise<OptimizeResultDto | null> {
    try {
      this.lastOptimize = await this.api.optimize(this.project, this.camera);
    } catch (e) {
      this.notice = { kind: "error", message: String(e) };
      return null;
    }
    this.renderBump += 1; // camera estimate moved: re-fetch the mesh render
    this.notice = { kind: "idle" };
    return this.lastOptimize;
  }

  /** Mean L1 residual to display; equals the API-reported loss exactly. */
  displayedMeanL1(): number | null {
    return this.lastOptimize ? this.lastOptimize.loss : null;
  }

  /** Index of the worst pair by residual, for one-click outlier removal. */
  largestResidualIndex(): number | null {
    const r = this.lastOptimize?.residuals;
    if (!r || r.length === 0) return null;
    let best = 0;
    for (let i = 1; i < r.length; i++) if (r[i].l1 > r[best].l1) best = i;
    return best;
  }
}
