/** Thin typed client over the service HTTP API (the UI's only data source). */

import type { CameraDto, CorrespondenceDto, OptimizeResultDto, Point3 } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async json<T>(url: string, init?: RequestInit): Promise<T> {
    const r = await this.fetchImpl(this.base + url, init);
    if (!r.ok) {
      let detail = r.statusText;
      try {
        const body = await r.json();
        detail = body.detail ?? body.error ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(r.status, detail);
    }
    return (await r.json()) as T;
  }

  listProjects(): Promise<string[]> {
    return this.json<{ projects: string[] }>("/api/projects").then((d) => d.projects);
  }

  listCameras(pid: string): Promise<CameraDto[]> {
    return this.json<{ cameras: CameraDto[] }>(`/api/projects/${pid}/cameras`).then(
      (d) => d.cameras,
    );
  }

  getCamera(pid: string, cid: string): Promise<CameraDto> {
    return this.json<CameraDto>(`/api/projects/${pid}/cameras/${cid}`);
  }

  cameraImageUrl(pid: string, cid: string): string {
    return `${this.base}/api/projects/${pid}/cameras/${cid}/image`;
  }

  renderUrl(pid: string, cid: string, bump: number): string {
    // bump busts the browser cache after the camera estimate changes
    return `${this.base}/api/projects/${pid}/render?cam=${cid}&r=${bump}`;
  }

  listCorrespondences(pid: string, cid: string): Promise<CorrespondenceDto[]> {
    return this.json<{ correspondences: CorrespondenceDto[] }>(
      `/api/projects/${pid}/cameras/${cid}/correspondences`,
    ).then((d) => d.correspondences);
  }

  addCorrespondence(
    pid: string,
    cid: string,
    p3d: Point3,
    u: number,
    v: number,
  ): Promise<CorrespondenceDto> {
    return this.json<CorrespondenceDto>(
      `/api/projects/${pid}/cameras/${cid}/correspondences`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ ...p3d, u, v }),
      },
    );
  }

  deleteCorrespondence(pid: string, cid: string, index: number): Promise<void> {
    return this.json(`/api/projects/${pid}/cameras/${cid}/correspondences/${index}`, {
      method: "DELETE",
    });
  }

  pick3d(pid: string, cid: string, u: number, v: number): Promise<Point3> {
    return this.json<Point3>(`/api/projects/${pid}/pick3d`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ camera: cid, u, v }),
    });
  }

  optimize(pid: string, cid: string): Promise<OptimizeResultDto> {
    return this.json<OptimizeResultDto>(`/api/projects/${pid}/cameras/${cid}/optimize`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({}),
    });
  }
}
