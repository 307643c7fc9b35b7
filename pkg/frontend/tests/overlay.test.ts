import { describe, expect, it } from "vitest";

import { peerMarkers, projectToScreen } from "../src/overlay.js";
import type { CameraParams, PeerView } from "../src/protocol.js";

const camera: CameraParams = {
  pos: [0, 0, 100],
  target: [0, 0, 0],
  fov_deg: 90,
  width: 100,
  height: 100,
};

describe("pose projection", () => {
  it("the look target lands at the screen center", () => {
    const point = projectToScreen(camera, [0, 0, 0]);
    expect(point.visible).toBe(true);
    expect(point.x).toBeCloseTo(0.5);
    expect(point.y).toBeCloseTo(0.5);
  });

  it("points behind the camera are invisible", () => {
    const point = projectToScreen(camera, [0, 0, 200]);
    expect(point.visible).toBe(false);
  });

  it("an offset point lands on the correct side", () => {
    // fov 90 deg at depth 100: half-width is 100, so x=+50 sits 1/4 from the right edge
    const point = projectToScreen(camera, [50, 0, 0]);
    expect(point.visible).toBe(true);
    // looking down -z, world +x appears on the right half
    expect(point.x).toBeCloseTo(0.75);
    expect(point.y).toBeCloseTo(0.5);
  });

  it("points outside the frustum are not visible", () => {
    const point = projectToScreen(camera, [500, 0, 0]);
    expect(point.visible).toBe(false);
  });
});

describe("peer markers", () => {
  const peer = (id: string, pose?: [number, number, number], self = false): PeerView => ({
    id,
    name: id,
    connected: true,
    self,
    pose: pose ? { position: pose, orientation: [0, 0, 0, 1] } : undefined,
  });

  it("draws only other peers with poses in view", () => {
    const markers = peerMarkers(camera, [
      peer("me", [0, 0, 0], true),
      peer("visible", [10, 0, 0]),
      peer("behind", [0, 0, 300]),
      peer("poseless"),
    ]);
    expect(markers.map((m) => m.name)).toEqual(["visible"]);
  });

  it("marker disappears once the peer leaves the presence list", () => {
    const before = peerMarkers(camera, [peer("a", [0, 0, 0]), peer("b", [5, 5, 0])]);
    const after = peerMarkers(camera, [peer("a", [0, 0, 0])]);
    expect(before).toHaveLength(2);
    expect(after).toHaveLength(1);
  });
});
