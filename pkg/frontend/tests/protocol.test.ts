import { describe, expect, it } from "vitest";
import { cameraMessage, parseServerMessage, pokeMessage, resetMessage } from "../src/protocol.js";

describe("wire protocol", () => {
  it("parses frames and errors, drops garbage", () => {
    const frame = parseServerMessage(JSON.stringify({
      type: "frame", schema: "wire/1", tick: 3,
      bodies: [{ name: "b", positions: [[0, 0, 0]], colors: [[0, 0, 0]], scalar: [0] }],
    }));
    expect(frame?.type).toBe("frame");
    const err = parseServerMessage(JSON.stringify({
      type: "error", schema: "wire/1", code: "bad_json", text: "x",
    }));
    expect(err?.type).toBe("error");
    expect(parseServerMessage("{nope")).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "frame", schema: "wire/2" }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ schema: "wire/1" }))).toBeNull();
    expect(parseServerMessage("42")).toBeNull();
  });

  it("click at the canvas center encodes ndc (0, 0)", () => {
    const msg = JSON.parse(pokeMessage(0, 0));
    expect(msg.type).toBe("poke");
    expect(msg.schema).toBe("wire/1");
    expect(msg.ndc_xy).toEqual([0, 0]);
  });

  it("camera and reset messages carry the schema tag", () => {
    const cam = JSON.parse(cameraMessage([[1, 0, 0], [0, 1, 0], [0, 0, 1]], [0, 0, 5]));
    expect(cam.extrinsics.translation).toEqual([0, 0, 5]);
    expect(JSON.parse(resetMessage()).type).toBe("reset");
  });
});
