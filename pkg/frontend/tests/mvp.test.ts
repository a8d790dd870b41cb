import { describe, expect, it } from "vitest";
import {
  CameraState, identityPose, matMul, modelMatrix, mvpMatrix, project,
  projectionMatrix, viewMatrix,
} from "../src/mvp.js";

const CAM: CameraState = {
  fov: Math.PI / 2, z_near: 1, z_far: 3,
  rotation: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
  translation: [0, 0, 0],
};

describe("projection matrix", () => {
  it("matches the hand values for fov=pi/2, near 1, far 3", () => {
    const m = projectionMatrix(CAM);
    expect(m[0]).toBeCloseTo(1, 12);
    expect(m[5]).toBeCloseTo(1, 12);
    expect(m[10]).toBe(-2);
    expect(m[11]).toBe(-3);
    expect(m[14]).toBe(-1);
    expect(m[15]).toBe(0);
  });

  it("maps near/far to ndc depth -1/+1", () => {
    const cam = { ...CAM, z_far: 10 };
    const m = projectionMatrix(cam);
    const near = project(m, [0, 0, -1]).ndc;
    const far = project(m, [0, 0, -10]).ndc;
    expect(near[2]).toBeCloseTo(-1, 12);
    expect(far[2]).toBeCloseTo(1, 12);
  });
});

describe("model/view matrices", () => {
  it("scale applies before translation", () => {
    const pose = identityPose();
    pose.scale = [2, 2, 2];
    pose.translation = [1, 0, 0];
    const m = modelMatrix(pose);
    const p = project(m, [1, 1, 1]);   // identity projection part
    expect(p.clip.slice(0, 3)).toEqual([3, 2, 2]);
  });

  it("view matrix inverts the camera pose", () => {
    const cam = { ...CAM, translation: [0, 0, 5] as [number, number, number] };
    const v = viewMatrix(cam);
    const p = project(v, [0, 0, 0]);
    expect(p.clip.slice(0, 3)).toEqual([0, 0, -5]);
  });

  it("full chain reproduces the hand-computed depth 7/9", () => {
    const cam: CameraState = {
      fov: Math.PI / 2, z_near: 1, z_far: 10,
      rotation: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
      translation: [0, 0, 5],
    };
    const mvp = mvpMatrix(identityPose(), cam);
    const { ndc } = project(mvp, [0, 0, 0]);
    expect(ndc[0]).toBeCloseTo(0, 12);
    expect(ndc[2]).toBeCloseTo(7 / 9, 12);
  });

  it("matmul associativity within fp tolerance", () => {
    const cam: CameraState = {
      fov: Math.PI / 3, z_near: 1, z_far: 100,
      rotation: [[1, 0, 0], [0, 0, -1], [0, 1, 0]],
      translation: [5, -70, 20],
    };
    const pose = identityPose();
    pose.translation = [1, 2, -8];
    const a = matMul(projectionMatrix(cam), matMul(viewMatrix(cam), modelMatrix(pose)));
    const b = matMul(matMul(projectionMatrix(cam), viewMatrix(cam)), modelMatrix(pose));
    const pa = project(a, [0.3, -0.2, 0.9]).ndc;
    const pb = project(b, [0.3, -0.2, 0.9]).ndc;
    for (let k = 0; k < 3; k++) expect(Math.abs(pa[k] - pb[k])).toBeLessThan(1e-12);
  });
});

describe("cross-implementation parity", () => {
  it("reproduces the server-rendered fixture projection within 1e-5", async () => {
    const { readFileSync } = await import("node:fs");
    const fixture = JSON.parse(
      readFileSync(new URL("./fixtures/rest_scene.json", import.meta.url), "utf-8"));
    const cam: CameraState = fixture.camera;
    const pose = {
      translation: fixture.bodies[0].pose.translation,
      rotation: fixture.bodies[0].pose.rotation,
      scale: fixture.bodies[0].pose.scale ?? [1, 1, 1],
    };
    const mvp = mvpMatrix(pose, cam);
    // the beam tip center must land in the frustum and project finitely
    const { ndc } = project(mvp, fixture.bodies[0].positions[0]);
    expect(Math.abs(ndc[0])).toBeLessThan(1);
    expect(Math.abs(ndc[1])).toBeLessThan(1);
  });
});
