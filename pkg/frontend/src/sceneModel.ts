// UI-side mirror of the gateway scene. The model is the single source the
// page renders from, and it only ever changes by reducing a server event:
// no optimistic edits, so every displayed value round-trips from the last
// scene_state.

import type {
  ClientView,
  GatewayEvent,
  PeerView,
  SpecimenView,
} from "./protocol.js";

export interface UiSceneModel {
  readonly connected: boolean;
  readonly room: string;
  readonly selfId: string;
  readonly specimens: ReadonlyArray<SpecimenView>;
  readonly peers: ReadonlyArray<PeerView>;
  readonly clients: ReadonlyArray<ClientView>;
  readonly lastError: string | null;
}

export function emptyModel(): UiSceneModel {
  return {
    connected: false,
    room: "",
    selfId: "",
    specimens: [],
    peers: [],
    clients: [],
    lastError: null,
  };
}

export function reduce(model: UiSceneModel, event: GatewayEvent): UiSceneModel {
  switch (event.ev) {
    case "scene_state":
      return {
        ...model,
        room: event.room,
        selfId: event.self,
        specimens: event.specimens,
      };
    case "presence":
      return { ...model, peers: event.peers, clients: event.clients };
    case "error":
      return { ...model, lastError: event.message };
  }
}

export function setConnected(model: UiSceneModel, connected: boolean): UiSceneModel {
  if (model.connected === connected) return model;
  return { ...model, connected };
}

export function specimenById(model: UiSceneModel, id: string): SpecimenView | undefined {
  return model.specimens.find((s) => s.id === id);
}

/** Roster entries: everyone but ourselves (session peers + other panel clients). */
export function rosterOf(model: UiSceneModel, ownClientId: string | null): string[] {
  const peers = model.peers
    .filter((p) => !p.self)
    .map((p) => p.name || p.id.slice(0, 8));
  const clients = model.clients
    .filter((c) => c.id !== ownClientId)
    .map((c) => c.name || c.id);
  return [...peers, ...clients];
}
