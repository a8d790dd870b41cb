/**
 * Mouse orbit around a focus point. The resulting extrinsics are sent to the
 * server (picking happens server-side, so the server must share the pose).
 */
import { CameraState } from "./mvp.js";

export class OrbitControl {
  azimuth: number;
  elevation: number;
  radius: number;

  constructor(public focus: [number, number, number], camera: CameraState) {
    const off = [
      camera.translation[0] - focus[0],
      camera.translation[1] - focus[1],
      camera.translation[2] - focus[2],
    ];
    this.radius = Math.hypot(off[0], off[1], off[2]);
    this.azimuth = Math.atan2(off[0], -off[1]);
    this.elevation = Math.asin(off[2] / this.radius);
  }

  drag(dx: number, dy: number): void {
    this.azimuth += dx * 0.01;
    this.elevation = Math.min(Math.max(this.elevation + dy * 0.01, -1.4), 1.4);
  }

  zoom(factor: number): void {
    this.radius = Math.min(Math.max(this.radius * factor, 1.0), 1e4);
  }

  /** Camera pose looking at the focus with world +z as the up reference. */
  extrinsics(): { rotation: number[][]; translation: number[] } {
    const ce = Math.cos(this.elevation);
    const pos = [
      this.focus[0] + this.radius * ce * Math.sin(this.azimuth),
      this.focus[1] - this.radius * ce * Math.cos(this.azimuth),
      this.focus[2] + this.radius * Math.sin(this.elevation),
    ];
    // camera -z axis points at the focus
    const zc = [
      (pos[0] - this.focus[0]) / this.radius,
      (pos[1] - this.focus[1]) / this.radius,
      (pos[2] - this.focus[2]) / this.radius,
    ];
    const up = [0, 0, 1];
    let xc = [
      up[1] * zc[2] - up[2] * zc[1],
      up[2] * zc[0] - up[0] * zc[2],
      up[0] * zc[1] - up[1] * zc[0],
    ];
    const xl = Math.hypot(xc[0], xc[1], xc[2]);
    xc = xl > 1e-9 ? [xc[0] / xl, xc[1] / xl, xc[2] / xl] : [1, 0, 0];
    const yc = [
      zc[1] * xc[2] - zc[2] * xc[1],
      zc[2] * xc[0] - zc[0] * xc[2],
      zc[0] * xc[1] - zc[1] * xc[0],
    ];
    // columns are the camera axes expressed in world coordinates
    const rotation = [
      [xc[0], yc[0], zc[0]],
      [xc[1], yc[1], zc[1]],
      [xc[2], yc[2], zc[2]],
    ];
    return { rotation, translation: pos };
  }
}
