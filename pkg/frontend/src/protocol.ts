// Gateway wire protocol: JSON ops out, scene/presence/error events plus
// binary frames in. Mirrors protocol.md section 3.

export interface Transform {
  position: [number, number, number];
  orientation: [number, number, number, number];
  scale: number;
}

export interface VizSettings {
  lut: string;
  opacity: number;
  quality: "low" | "medium" | "high";
  planes: Array<[number, number, number, number, boolean]>;
  material: string;
}

export interface SpecimenView {
  id: string;
  kind: "volume" | "mesh";
  source: { hash: string; origin: string };
  transform: Transform;
  viz: VizSettings;
  owner: string;
  version: [number, string];
}

export interface PeerView {
  id: string;
  name: string;
  connected: boolean;
  self: boolean;
  pose?: { position: [number, number, number]; orientation: [number, number, number, number] };
}

export interface ClientView {
  id: string;
  name: string;
}

export interface SceneStateEvent {
  ev: "scene_state";
  room: string;
  self: string;
  specimens: SpecimenView[];
}

export interface PresenceEvent {
  ev: "presence";
  peers: PeerView[];
  clients: ClientView[];
}

export interface ErrorEvent {
  ev: "error";
  message: string;
}

export type GatewayEvent = SceneStateEvent | PresenceEvent | ErrorEvent;

export function parseEvent(text: string): GatewayEvent {
  const obj = JSON.parse(text);
  if (obj.ev !== "scene_state" && obj.ev !== "presence" && obj.ev !== "error") {
    throw new Error(`unknown event ${obj.ev}`);
  }
  return obj as GatewayEvent;
}

export interface BinaryFrame {
  frameId: number;
  width: number;
  height: number;
  png: Uint8Array;
}

// Binary layout: u32 frame id, u16 width, u16 height (big-endian), PNG bytes.
export function parseBinaryFrame(data: ArrayBuffer): BinaryFrame {
  if (data.byteLength < 8) {
    throw new Error(`frame too short: ${data.byteLength} bytes`);
  }
  const view = new DataView(data);
  return {
    frameId: view.getUint32(0, false),
    width: view.getUint16(4, false),
    height: view.getUint16(6, false),
    png: new Uint8Array(data, 8),
  };
}

export interface CameraParams {
  pos: [number, number, number];
  target: [number, number, number];
  fov_deg?: number;
  width?: number;
  height?: number;
}

// Op builders; every user interaction funnels through one of these.
export const ops = {
  list(): string {
    return JSON.stringify({ op: "list" });
  },
  loadSpecimen(path: string, specimenId?: string): string {
    return JSON.stringify({ op: "load_specimen", path, specimen_id: specimenId });
  },
  setViz(specimenId: string, patch: Partial<VizSettings>): string {
    return JSON.stringify({ op: "set_viz", specimen_id: specimenId, ...patch });
  },
  setTransform(specimenId: string, patch: Partial<Transform>): string {
    return JSON.stringify({ op: "set_transform", specimen_id: specimenId, ...patch });
  },
  grab(specimenId: string): string {
    return JSON.stringify({ op: "grab", specimen_id: specimenId });
  },
  release(specimenId: string): string {
    return JSON.stringify({ op: "release", specimen_id: specimenId });
  },
  setCamera(camera: CameraParams, drag = false, name?: string): string {
    return JSON.stringify({ op: "set_camera", ...camera, drag: drag || undefined, name });
  },
};
