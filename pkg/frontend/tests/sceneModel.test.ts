import { describe, expect, it } from "vitest";

import type { PresenceEvent, SceneStateEvent, SpecimenView } from "../src/protocol.js";
import {
  emptyModel,
  reduce,
  rosterOf,
  setConnected,
  specimenById,
} from "../src/sceneModel.js";

function specimen(id: string, opacity = 1): SpecimenView {
  return {
    id,
    kind: "volume",
    source: { hash: "h", origin: "/o" },
    transform: { position: [0, 0, 0], orientation: [0, 0, 0, 1], scale: 1 },
    viz: { lut: "grayscale", opacity, quality: "medium", planes: [], material: "default_gray" },
    owner: "",
    version: [1, "w"],
  };
}

function sceneEvent(...specimens: SpecimenView[]): SceneStateEvent {
  return { ev: "scene_state", room: "r", self: "me", specimens };
}

describe("scene model", () => {
  it("starts empty and disconnected", () => {
    const model = emptyModel();
    expect(model.specimens).toHaveLength(0);
    expect(model.connected).toBe(false);
  });

  it("mirrors scene_state wholesale", () => {
    const model = reduce(emptyModel(), sceneEvent(specimen("a"), specimen("b")));
    expect(model.specimens.map((s) => s.id)).toEqual(["a", "b"]);
    expect(model.room).toBe("r");
    expect(model.selfId).toBe("me");
  });

  it("a later scene_state replaces, never merges", () => {
    let model = reduce(emptyModel(), sceneEvent(specimen("a")));
    model = reduce(model, sceneEvent(specimen("b")));
    expect(model.specimens.map((s) => s.id)).toEqual(["b"]);
  });

  it("reducing never mutates the previous model", () => {
    const before = reduce(emptyModel(), sceneEvent(specimen("a")));
    const frozen = JSON.stringify(before);
    reduce(before, sceneEvent(specimen("x"), specimen("y")));
    setConnected(before, true);
    expect(JSON.stringify(before)).toBe(frozen);
  });

  it("presence updates peers and clients", () => {
    const presence: PresenceEvent = {
      ev: "presence",
      peers: [
        { id: "p1", name: "alice", connected: true, self: false },
        { id: "me", name: "self", connected: true, self: true },
      ],
      clients: [{ id: "ui1", name: "tab-one" }],
    };
    const model = reduce(emptyModel(), presence);
    expect(model.peers).toHaveLength(2);
    expect(model.clients).toHaveLength(1);
  });

  it("roster excludes self peer and own client id", () => {
    const presence: PresenceEvent = {
      ev: "presence",
      peers: [
        { id: "p1", name: "alice", connected: true, self: false },
        { id: "me", name: "self", connected: true, self: true },
      ],
      clients: [
        { id: "ui1", name: "tab-one" },
        { id: "ui2", name: "tab-two" },
      ],
    };
    const model = reduce(emptyModel(), presence);
    expect(rosterOf(model, "ui1")).toEqual(["alice", "tab-two"]);
  });

  it("peer leave disappears from the roster within one presence event", () => {
    const two: PresenceEvent = {
      ev: "presence",
      peers: [
        { id: "p1", name: "alice", connected: true, self: false },
        { id: "p2", name: "bob", connected: true, self: false },
      ],
      clients: [],
    };
    const one: PresenceEvent = { ev: "presence", peers: [two.peers[0]], clients: [] };
    let model = reduce(emptyModel(), two);
    expect(rosterOf(model, null)).toEqual(["alice", "bob"]);
    model = reduce(model, one);
    expect(rosterOf(model, null)).toEqual(["alice"]);
  });

  it("errors are recorded without touching the scene", () => {
    let model = reduce(emptyModel(), sceneEvent(specimen("a")));
    model = reduce(model, { ev: "error", message: "nope" });
    expect(model.lastError).toBe("nope");
    expect(model.specimens).toHaveLength(1);
  });

  it("specimenById finds entries", () => {
    const model = reduce(emptyModel(), sceneEvent(specimen("a"), specimen("b")));
    expect(specimenById(model, "b")?.id).toBe("b");
    expect(specimenById(model, "zz")).toBeUndefined();
  });
});
