// Gateway client: one socket, reconnect with backoff, events fanned out to
// the page. The model lives here; views subscribe and re-render whole.

import { FrameSequencer } from "./frames.js";
import {
  type BinaryFrame,
  type CameraParams,
  type GatewayEvent,
  ops,
  parseBinaryFrame,
  parseEvent,
} from "./protocol.js";
import { backoffDelayMs } from "./reconnect.js";
import { emptyModel, reduce, setConnected, type UiSceneModel } from "./sceneModel.js";

export interface GatewayClientHandlers {
  onModel?: (model: UiSceneModel) => void;
  onFrame?: (frame: BinaryFrame) => void;
  onError?: (message: string) => void;
}

export class GatewayClient {
  model: UiSceneModel = emptyModel();
  private ws: WebSocket | null = null;
  private attempt = 0;
  private closed = false;
  private readonly frames = new FrameSequencer();

  constructor(
    private readonly url: string,
    private readonly handlers: GatewayClientHandlers = {},
  ) {}

  connect(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url);
    ws.binaryType = "arraybuffer";
    this.ws = ws;

    ws.onopen = () => {
      this.attempt = 0;
      this.setModel(setConnected(this.model, true));
    };
    ws.onmessage = (event: MessageEvent) => {
      if (typeof event.data === "string") {
        this.handleEvent(parseEvent(event.data));
      } else {
        const frame = parseBinaryFrame(event.data as ArrayBuffer);
        if (this.frames.accept(frame)) {
          this.handlers.onFrame?.(frame);
        }
      }
    };
    ws.onclose = () => {
      this.setModel(setConnected(this.model, false));
      this.scheduleReconnect();
    };
    ws.onerror = () => ws.close();
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }

  private scheduleReconnect(): void {
    if (this.closed) return;
    const delay = backoffDelayMs(this.attempt);
    this.attempt += 1;
    setTimeout(() => this.connect(), delay);
  }

  private handleEvent(event: GatewayEvent): void {
    if (event.ev === "error") {
      this.handlers.onError?.(event.message);
    }
    this.setModel(reduce(this.model, event));
  }

  private setModel(model: UiSceneModel): void {
    this.model = model;
    this.handlers.onModel?.(model);
  }

  private send(payload: string): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(payload);
    }
  }

  // -- outgoing ops ---------------------------------------------------------

  requestState(): void {
    this.send(ops.list());
  }

  loadSpecimen(path: string, specimenId?: string): void {
    this.send(ops.loadSpecimen(path, specimenId));
  }

  setOpacity(specimenId: string, opacity: number): void {
    this.send(ops.setViz(specimenId, { opacity }));
  }

  setLut(specimenId: string, lut: string): void {
    this.send(ops.setViz(specimenId, { lut }));
  }

  setQuality(specimenId: string, quality: "low" | "medium" | "high"): void {
    this.send(ops.setViz(specimenId, { quality }));
  }

  setMaterial(specimenId: string, material: string): void {
    this.send(ops.setViz(specimenId, { material }));
  }

  setPlanes(specimenId: string, planes: Array<[number, number, number, number, boolean]>): void {
    this.send(ops.setViz(specimenId, { planes }));
  }

  setScale(specimenId: string, scale: number): void {
    this.send(ops.setTransform(specimenId, { scale }));
  }

  moveSpecimen(specimenId: string, position: [number, number, number]): void {
    this.send(ops.setTransform(specimenId, { position }));
  }

  grab(specimenId: string): void {
    this.send(ops.grab(specimenId));
  }

  release(specimenId: string): void {
    this.send(ops.release(specimenId));
  }

  setCamera(camera: CameraParams, drag = false, name?: string): void {
    this.send(ops.setCamera(camera, drag, name));
  }
}
