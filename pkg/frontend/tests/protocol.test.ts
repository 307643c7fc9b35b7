import { describe, expect, it } from "vitest";

import { FrameSequencer } from "../src/frames.js";
import { ops, parseBinaryFrame, parseEvent } from "../src/protocol.js";
import { backoffDelayMs, BACKOFF_CAP_MS } from "../src/reconnect.js";

function frameBuffer(frameId: number, width: number, height: number): ArrayBuffer {
  const buf = new ArrayBuffer(8 + 3);
  const view = new DataView(buf);
  view.setUint32(0, frameId, false);
  view.setUint16(4, width, false);
  view.setUint16(6, height, false);
  new Uint8Array(buf, 8).set([1, 2, 3]);
  return buf;
}

describe("binary frame header", () => {
  it("parses the big-endian header and slices the png", () => {
    const frame = parseBinaryFrame(frameBuffer(7, 320, 200));
    expect(frame.frameId).toBe(7);
    expect(frame.width).toBe(320);
    expect(frame.height).toBe(200);
    expect([...frame.png]).toEqual([1, 2, 3]);
  });

  it("rejects truncated buffers", () => {
    expect(() => parseBinaryFrame(new ArrayBuffer(4))).toThrow(/short/);
  });
});

describe("frame ordering", () => {
  it("drops stale frame ids", () => {
    const seq = new FrameSequencer();
    expect(seq.accept(parseBinaryFrame(frameBuffer(1, 1, 1)))).toBe(true);
    expect(seq.accept(parseBinaryFrame(frameBuffer(3, 1, 1)))).toBe(true);
    expect(seq.accept(parseBinaryFrame(frameBuffer(2, 1, 1)))).toBe(false);
    expect(seq.accept(parseBinaryFrame(frameBuffer(3, 1, 1)))).toBe(false);
    expect(seq.dropped).toBe(2);
    expect(seq.lastFrameId).toBe(3);
  });
});

describe("event parsing", () => {
  it("accepts the three event kinds", () => {
    expect(parseEvent('{"ev":"error","message":"x"}').ev).toBe("error");
    expect(
      parseEvent('{"ev":"scene_state","room":"r","self":"s","specimens":[]}').ev,
    ).toBe("scene_state");
    expect(parseEvent('{"ev":"presence","peers":[],"clients":[]}').ev).toBe("presence");
  });

  it("rejects unknown events", () => {
    expect(() => parseEvent('{"ev":"mystery"}')).toThrow(/unknown/);
  });
});

describe("op builders", () => {
  it("set_viz carries only the touched fields", () => {
    const msg = JSON.parse(ops.setViz("s1", { opacity: 0 }));
    expect(msg).toEqual({ op: "set_viz", specimen_id: "s1", opacity: 0 });
  });

  it("plane payloads ride set_viz", () => {
    const msg = JSON.parse(ops.setViz("s1", { planes: [[1, 0, 0, 5, true]] }));
    expect(msg.planes).toEqual([[1, 0, 0, 5, true]]);
  });

  it("set_camera includes drag only while dragging", () => {
    const still = JSON.parse(ops.setCamera({ pos: [0, 0, 1], target: [0, 0, 0] }));
    expect(still.drag).toBeUndefined();
    const dragging = JSON.parse(ops.setCamera({ pos: [0, 0, 1], target: [0, 0, 0] }, true));
    expect(dragging.drag).toBe(true);
  });

  it("grab and release name the specimen", () => {
    expect(JSON.parse(ops.grab("x")).op).toBe("grab");
    expect(JSON.parse(ops.release("x")).specimen_id).toBe("x");
  });
});

describe("reconnect backoff", () => {
  it("doubles and caps", () => {
    expect(backoffDelayMs(0)).toBe(500);
    expect(backoffDelayMs(1)).toBe(1000);
    expect(backoffDelayMs(2)).toBe(2000);
    expect(backoffDelayMs(10)).toBe(BACKOFF_CAP_MS);
  });
});
