/** DTOs mirroring the service API responses. */

export interface CorrespondenceDto {
  index: number;
  x: number;
  y: number;
  z: number;
  u: number;
  v: number;
}

export interface ResidualDto {
  u: number;
  v: number;
  pu: number;
  pv: number;
  l1: number;
}

export interface OptimizeResultDto {
  fx: number;
  fy: number;
  yaw_deg: number;
  pitch_deg: number;
  loss: number;
  residuals: ResidualDto[];
  loss_trace: number[];
  warnings: string[];
}

export interface CameraDto {
  id: string;
  width: number;
  height: number;
  fx: number;
  fy: number;
  yaw_deg: number;
  pitch_deg: number;
  optimized: boolean;
}

export interface Point2 {
  u: number;
  v: number;
}

export interface Point3 {
  x: number;
  y: number;
  z: number;
}
