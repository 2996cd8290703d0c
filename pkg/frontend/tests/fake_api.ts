/** In-memory stand-in for the service API with simple, exact geometry:
 * the fake camera projects the 3D point (x, y, z) to the pixel (x, y), and
 * pick3d inverts that (v < skyV rows are sky). Residuals and loss are the
 * real mean-L1 bookkeeping over the stored pairs, so UI logic is tested
 * against honest arithmetic instead of canned responses. */

import type {
  CorrespondenceDto,
  OptimizeResultDto,
  Point3,
  ResidualDto,
} from "../src/types.js";
import { ApiError } from "../src/api.js";

export class FakeApi {
  pairs: CorrespondenceDto[] = [];
  skyV = 10; // picks with v < skyV hit the sky
  optimizeCalls = 0;

  async listCorrespondences(_p: string, _c: string): Promise<CorrespondenceDto[]> {
    return this.pairs.map((c, index) => ({ ...c, index }));
  }

  async addCorrespondence(
    _p: string,
    _c: string,
    p3d: Point3,
    u: number,
    v: number,
  ): Promise<CorrespondenceDto> {
    const dto = { index: this.pairs.length, ...p3d, u, v };
    this.pairs.push(dto);
    return dto;
  }

  async deleteCorrespondence(_p: string, _c: string, index: number): Promise<void> {
    if (index < 0 || index >= this.pairs.length) throw new ApiError(404, "no such pair");
    this.pairs.splice(index, 1);
  }

  async pick3d(_p: string, _c: string, u: number, v: number): Promise<Point3> {
    if (v < this.skyV) throw new ApiError(404, "sky pixel: no geometry under the pick");
    return { x: u, y: v, z: 0 };
  }

  async optimize(_p: string, _c: string): Promise<OptimizeResultDto> {
    this.optimizeCalls += 1;
    if (this.pairs.length === 0) throw new ApiError(422, "no correspondences");
    const residuals: ResidualDto[] = this.pairs.map((c) => ({
      u: c.u,
      v: c.v,
      pu: c.x,
      pv: c.y,
      l1: Math.abs(c.x - c.u) + Math.abs(c.y - c.v),
    }));
    const loss = residuals.reduce((s, r) => s + r.l1, 0) / residuals.length;
    return {
      fx: 1500,
      fy: 1500,
      yaw_deg: 30,
      pitch_deg: -5,
      loss,
      residuals,
      loss_trace: [loss],
      warnings: [],
    };
  }
}
