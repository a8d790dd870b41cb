/** wire/1 message types and tolerant parsing (malformed frames are dropped
 * with a diagnostic rather than killing the session). */

export interface HelloBody {
  name: string;
  nodes: number[][];
  surface: number[][];
  edges: number[][];
  fixed: number[];
  pose: { translation: number[]; rotation: number[][]; scale: number[] };
}

export interface HelloMsg {
  type: "hello";
  schema: string;
  tick_dt: number;
  scalar_field: string;
  colormap: { lo: number; hi: number; stops: number[][] };
  camera: { fov: number; z_near: number; z_far: number; rotation: number[][]; translation: number[] };
  light: { direction: number[] };
  bodies: HelloBody[];
  mvp_test: { pose: HelloBody["pose"]; points: number[][]; ndc: number[][] };
}

export interface FrameBody {
  name: string;
  positions: number[][];
  colors: number[][];
  scalar: number[];
}

export interface FrameMsg {
  type: "frame";
  schema: string;
  tick: number;
  bodies: FrameBody[];
}

export interface ErrorMsg {
  type: "error";
  schema: string;
  code: string;
  text: string;
}

export type ServerMsg = HelloMsg | FrameMsg | ErrorMsg;

export function parseServerMessage(raw: string): ServerMsg | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const msg = doc as Record<string, unknown>;
  if (msg["schema"] !== "wire/1") return null;
  const kind = msg["type"];
  if (kind === "hello" && Array.isArray(msg["bodies"])) return msg as unknown as HelloMsg;
  if (kind === "frame" && Array.isArray(msg["bodies"]) && typeof msg["tick"] === "number") {
    return msg as unknown as FrameMsg;
  }
  if (kind === "error" && typeof msg["code"] === "string") return msg as unknown as ErrorMsg;
  return null;
}

export function pokeMessage(ndcX: number, ndcY: number, button = 0): string {
  return JSON.stringify({ type: "poke", schema: "wire/1", ndc_xy: [ndcX, ndcY], button });
}

export function cameraMessage(rotation: number[][], translation: number[]): string {
  return JSON.stringify({
    type: "camera",
    schema: "wire/1",
    extrinsics: { rotation, translation },
  });
}

export function resetMessage(): string {
  return JSON.stringify({ type: "reset", schema: "wire/1" });
}
