/**
 * Z-buffered point/wire rasterizer - a line-for-line port of the server's
 * offline renderer, so a frame drawn here matches the offline PPM goldens
 * within the 2% per-pixel contract (same projection, same lighting at the
 * vertices, same Bresenham walk, same rounding).
 */
import { CameraState, Mat4, Pose, mvpMatrix, project } from "./mvp.js";

export interface LightSpec {
  direction: [number, number, number]; // unit, surface -> source
  k_ambient: number;
  k_diffuse: number;
  k_specular: number;
  shininess: number;
}

export interface RasterBody {
  positions: number[][];   // model space, deformed
  baseColors: number[][];  // per-vertex colormap RGB in [0,1]
  edges: number[][];       // undirected wireframe pairs
  surface: number[][];     // outward triangles (for vertex normals)
  pose: Pose;
}

export interface RasterTarget {
  width: number;
  height: number;
  rgb: Uint8ClampedArray;  // 3 bytes per pixel, row-major
  depth: Float64Array;
}

export function makeTarget(width: number, height: number): RasterTarget {
  const depth = new Float64Array(width * height);
  depth.fill(Infinity);
  return { width, height, rgb: new Uint8ClampedArray(width * height * 3), depth };
}

function rotate(r: number[][], v: [number, number, number]): [number, number, number] {
  return [
    r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
    r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
    r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
  ];
}

/** Lit vertex colors: base * (ka + kd max(l.n, 0)) + white specular. */
export function litVertexColors(body: RasterBody, cam: CameraState,
                                light: LightSpec): number[][] {
  const n = body.positions.length;
  const normals: number[][] = Array.from({ length: n }, () => [0, 0, 0]);
  for (const tri of body.surface) {
    const [a, b, c] = tri;
    const pa = body.positions[a];
    const pb = body.positions[b];
    const pc = body.positions[c];
    const u = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
    const v = [pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]];
    const fn = [
      u[1] * v[2] - u[2] * v[1],
      u[2] * v[0] - u[0] * v[2],
      u[0] * v[1] - u[1] * v[0],
    ];
    for (const idx of tri) {
      normals[idx][0] += fn[0];
      normals[idx][1] += fn[1];
      normals[idx][2] += fn[2];
    }
  }
  const out: number[][] = [];
  const l = light.direction;
  for (let i = 0; i < n; i++) {
    const nm = normals[i];
    const len = Math.hypot(nm[0], nm[1], nm[2]);
    const hasNormal = len > 1e-12;
    let diffuse = 0;
    let spec = 0;
    if (hasNormal) {
      const unit: [number, number, number] = [nm[0] / len, nm[1] / len, nm[2] / len];
      const nw = rotate(body.pose.rotation, unit);
      const p = body.positions[i];
      const sp = [p[0] * body.pose.scale[0], p[1] * body.pose.scale[1], p[2] * body.pose.scale[2]];
      const rw = rotate(body.pose.rotation, sp as [number, number, number]);
      const xw = [rw[0] + body.pose.translation[0], rw[1] + body.pose.translation[1],
                  rw[2] + body.pose.translation[2]];
      const view = [cam.translation[0] - xw[0], cam.translation[1] - xw[1],
                    cam.translation[2] - xw[2]];
      const vlen = Math.max(Math.hypot(view[0], view[1], view[2]), 1e-12);
      const ln = nw[0] * l[0] + nw[1] * l[1] + nw[2] * l[2];
      diffuse = Math.max(ln, 0);
      const r = [2 * ln * nw[0] - l[0], 2 * ln * nw[1] - l[1], 2 * ln * nw[2] - l[2]];
      const rv = Math.max((r[0] * view[0] + r[1] * view[1] + r[2] * view[2]) / vlen, 0);
      spec = Math.pow(rv, light.shininess);
    }
    const base = body.baseColors[i];
    const gain = light.k_ambient + light.k_diffuse * diffuse;
    out.push([
      Math.min(Math.max(base[0] * gain + light.k_specular * spec, 0), 1),
      Math.min(Math.max(base[1] * gain + light.k_specular * spec, 0), 1),
      Math.min(Math.max(base[2] * gain + light.k_specular * spec, 0), 1),
    ]);
  }
  return out;
}

function put(t: RasterTarget, x: number, y: number, z: number, rgb: number[]): void {
  if (x < 0 || x >= t.width || y < 0 || y >= t.height) return;
  const p = y * t.width + x;
  if (z < t.depth[p]) {
    t.depth[p] = z;
    t.rgb[p * 3] = Math.round(rgb[0] * 255);
    t.rgb[p * 3 + 1] = Math.round(rgb[1] * 255);
    t.rgb[p * 3 + 2] = Math.round(rgb[2] * 255);
  }
}

function drawDot(t: RasterTarget, x: number, y: number, z: number, rgb: number[]): void {
  for (let dy = -1; dy <= 1; dy++) {
    for (let dx = -1; dx <= 1; dx++) {
      put(t, x + dx, y + dy, z - 1e-6, rgb);
    }
  }
}

function drawLine(t: RasterTarget, x0: number, y0: number, z0: number, c0: number[],
                  x1: number, y1: number, z1: number, c1: number[]): void {
  const steps = Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0));
  if (steps === 0) {
    put(t, x0, y0, Math.min(z0, z1), c0);
    return;
  }
  for (let i = 0; i <= steps; i++) {
    const f = i / steps;
    const x = Math.round(x0 + (x1 - x0) * f);
    const y = Math.round(y0 + (y1 - y0) * f);
    const z = z0 + (z1 - z0) * f;
    const rgb = [c0[0] + (c1[0] - c0[0]) * f, c0[1] + (c1[1] - c0[1]) * f,
                 c0[2] + (c1[2] - c0[2]) * f];
    put(t, x, y, z, rgb);
  }
}

export function renderBody(t: RasterTarget, body: RasterBody, cam: CameraState,
                           light: LightSpec): void {
  const mvp: Mat4 = mvpMatrix(body.pose, cam);
  const n = body.positions.length;
  const px = new Int32Array(n);
  const py = new Int32Array(n);
  const depth = new Float64Array(n);
  const visible = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    let ndc: [number, number, number];
    try {
      ndc = project(mvp, body.positions[i] as [number, number, number]).ndc;
    } catch {
      continue;
    }
    px[i] = Math.round((ndc[0] + 1) * 0.5 * (t.width - 1));
    py[i] = Math.round((1 - ndc[1]) * 0.5 * (t.height - 1));
    depth[i] = ndc[2];
    visible[i] = (Math.abs(ndc[0]) <= 1 && Math.abs(ndc[1]) <= 1 && Math.abs(ndc[2]) <= 1) ? 1 : 0;
  }
  const colors = litVertexColors(body, cam, light);
  for (const [a, b] of body.edges) {
    if (visible[a] && visible[b]) {
      drawLine(t, px[a], py[a], depth[a], colors[a], px[b], py[b], depth[b], colors[b]);
    }
  }
  for (let i = 0; i < n; i++) {
    if (visible[i]) drawDot(t, px[i], py[i], depth[i], colors[i]);
  }
}
