/**
 * Client-side scene mirror: topology from hello, latest complete frame from
 * the stream. The client never integrates physics - every vertex position
 * comes from the server (thin-client contract).
 */
import { CameraState, Pose, mvpMatrix, project } from "./mvp.js";
import { HelloMsg, FrameMsg } from "./protocol.js";
import { LightSpec, RasterBody, RasterTarget, makeTarget, renderBody } from "./raster.js";

export interface ClientBody {
  name: string;
  edges: number[][];
  surface: number[][];
  pose: Pose;
  positions: number[][];
  colors: number[][];
}

export class ClientScene {
  bodies: ClientBody[] = [];
  camera!: CameraState;
  light!: LightSpec;
  tickDt = 0.05;
  lastTick = -1;
  ready = false;

  applyHello(hello: HelloMsg): void {
    this.camera = {
      fov: hello.camera.fov,
      z_near: hello.camera.z_near,
      z_far: hello.camera.z_far,
      rotation: hello.camera.rotation,
      translation: hello.camera.translation as [number, number, number],
    };
    const light = hello.light;
    const dir = light.direction;
    this.light = {
      direction: [dir[0], dir[1], dir[2]],
      k_ambient: (light as any).k_ambient ?? 0.2,
      k_diffuse: (light as any).k_diffuse ?? 0.7,
      k_specular: (light as any).k_specular ?? 0.3,
      shininess: (light as any).shininess ?? 16,
    };
    this.tickDt = hello.tick_dt;
    this.bodies = hello.bodies.map((b) => ({
      name: b.name,
      edges: b.edges,
      surface: b.surface,
      pose: {
        translation: b.pose.translation as [number, number, number],
        rotation: b.pose.rotation,
        scale: (b.pose.scale ?? [1, 1, 1]) as [number, number, number],
      },
      positions: b.nodes,
      colors: b.nodes.map(() => [0.5, 0.5, 0.5]),
    }));
    this.ready = true;
  }

  /** Cross-check the server's projection fixtures; returns the worst error. */
  verifyProjection(hello: HelloMsg): number {
    const pose: Pose = {
      translation: hello.mvp_test.pose.translation as [number, number, number],
      rotation: hello.mvp_test.pose.rotation,
      scale: (hello.mvp_test.pose.scale ?? [1, 1, 1]) as [number, number, number],
    };
    const mvp = mvpMatrix(pose, this.camera);
    let worst = 0;
    hello.mvp_test.points.forEach((p, i) => {
      const { ndc } = project(mvp, p as [number, number, number]);
      const ref = hello.mvp_test.ndc[i];
      for (let k = 0; k < 3; k++) worst = Math.max(worst, Math.abs(ndc[k] - ref[k]));
    });
    return worst;
  }

  applyFrame(frame: FrameMsg): boolean {
    if (!this.ready || frame.bodies.length !== this.bodies.length) return false;
    for (let i = 0; i < this.bodies.length; i++) {
      const fb = frame.bodies[i];
      if (!Array.isArray(fb.positions) || fb.positions.length !== this.bodies[i].positions.length) {
        return false;   // incomplete frame: drop, keep the previous one
      }
    }
    for (let i = 0; i < this.bodies.length; i++) {
      this.bodies[i].positions = frame.bodies[i].positions;
      this.bodies[i].colors = frame.bodies[i].colors;
    }
    this.lastTick = frame.tick;
    return true;
  }

  render(width: number, height: number): RasterTarget {
    const target = makeTarget(width, height);
    for (const body of this.bodies) {
      const rb: RasterBody = {
        positions: body.positions,
        baseColors: body.colors,
        edges: body.edges,
        surface: body.surface,
        pose: body.pose,
      };
      renderBody(target, rb, this.camera, this.light);
    }
    return target;
  }
}
