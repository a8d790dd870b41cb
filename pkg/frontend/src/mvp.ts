/**
 * Model/view/projection math mirroring the server's rendermath module.
 * Matrices are row-major number[16]; points are [x, y, z].
 *
 * The server ships projection test vectors in its hello message; the scene
 * layer re-projects them through this code and refuses to render if the two
 * implementations disagree beyond 1e-5.
 */

export type Mat4 = number[];
export type Vec3 = [number, number, number];

export interface Pose {
  translation: Vec3;
  rotation: number[][]; // 3x3
  scale: Vec3;
}

export interface CameraState {
  fov: number;
  z_near: number;
  z_far: number;
  rotation: number[][];
  translation: Vec3;
}

export function identityPose(): Pose {
  return {
    translation: [0, 0, 0],
    rotation: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    scale: [1, 1, 1],
  };
}

export function matMul(a: Mat4, b: Mat4): Mat4 {
  const out = new Array(16).fill(0);
  for (let i = 0; i < 4; i++) {
    for (let j = 0; j < 4; j++) {
      let s = 0;
      for (let k = 0; k < 4; k++) s += a[i * 4 + k] * b[k * 4 + j];
      out[i * 4 + j] = s;
    }
  }
  return out;
}

export function modelMatrix(pose: Pose): Mat4 {
  const r = pose.rotation;
  const [sx, sy, sz] = pose.scale;
  const [tx, ty, tz] = pose.translation;
  // translate * rotate * scale, scale applied to the point first
  return [
    r[0][0] * sx, r[0][1] * sy, r[0][2] * sz, tx,
    r[1][0] * sx, r[1][1] * sy, r[1][2] * sz, ty,
    r[2][0] * sx, r[2][1] * sy, r[2][2] * sz, tz,
    0, 0, 0, 1,
  ];
}

export function viewMatrix(cam: CameraState): Mat4 {
  // closed-form inverse of the camera pose: [R^T | -R^T t]
  const r = cam.rotation;
  const t = cam.translation;
  const rt = [
    [r[0][0], r[1][0], r[2][0]],
    [r[0][1], r[1][1], r[2][1]],
    [r[0][2], r[1][2], r[2][2]],
  ];
  const mt = rt.map((row) => -(row[0] * t[0] + row[1] * t[1] + row[2] * t[2]));
  return [
    rt[0][0], rt[0][1], rt[0][2], mt[0],
    rt[1][0], rt[1][1], rt[1][2], mt[1],
    rt[2][0], rt[2][1], rt[2][2], mt[2],
    0, 0, 0, 1,
  ];
}

export function projectionMatrix(cam: CameraState): Mat4 {
  const cot = 1.0 / Math.tan(cam.fov / 2.0);
  const zn = cam.z_near;
  const zf = cam.z_far;
  return [
    cot, 0, 0, 0,
    0, cot, 0, 0,
    0, 0, -(zf + zn) / (zf - zn), -2 * zf * zn / (zf - zn),
    0, 0, -1, 0,
  ];
}

export function mvpMatrix(pose: Pose, cam: CameraState): Mat4 {
  return matMul(projectionMatrix(cam), matMul(viewMatrix(cam), modelMatrix(pose)));
}

/** Clip-space transform plus the w-divide; throws for points on the camera plane. */
export function project(mvp: Mat4, p: Vec3): { clip: number[]; ndc: Vec3 } {
  const clip = [
    mvp[0] * p[0] + mvp[1] * p[1] + mvp[2] * p[2] + mvp[3],
    mvp[4] * p[0] + mvp[5] * p[1] + mvp[6] * p[2] + mvp[7],
    mvp[8] * p[0] + mvp[9] * p[1] + mvp[10] * p[2] + mvp[11],
    mvp[12] * p[0] + mvp[13] * p[1] + mvp[14] * p[2] + mvp[15],
  ];
  const w = clip[3];
  if (Math.abs(w) < 1e-12) throw new Error("point on the camera plane (w ~ 0)");
  return { clip, ndc: [clip[0] / w, clip[1] / w, clip[2] / w] };
}
