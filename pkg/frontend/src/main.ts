// Page entry: connect to the gateway, wire the canvas (orbit drag,
// shift-drag to move a grabbed specimen) and the control panel.

import { GatewayClient } from "./client.js";
import { drawFrame } from "./frames.js";
import { applyDrag, applyZoom, defaultOrbit, orbitCamera } from "./orbit.js";
import { drawMarkers, peerMarkers } from "./overlay.js";
import { bindPanel, buildPanel, renderPanel, type PanelState } from "./panel.js";
import { specimenById } from "./sceneModel.js";

function gatewayUrl(): string {
  const override = new URLSearchParams(location.search).get("gateway");
  if (override) return override;
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}

export function startPanel(root: HTMLElement, canvas: HTMLCanvasElement): GatewayClient {
  const panelEl = buildPanel(root);
  const state: PanelState = { selected: null };
  let orbit = defaultOrbit();

  const paintOverlay = () =>
    drawMarkers(
      canvas,
      peerMarkers(orbitCamera(orbit, canvas.width, canvas.height), client.model.peers),
    );
  const client = new GatewayClient(gatewayUrl(), {
    onModel: (model) => {
      renderPanel(panelEl, model, state, (id) => {
        state.selected = id;
        renderPanel(panelEl, client.model, state, () => undefined);
      });
      paintOverlay();
    },
    onFrame: (frame) => void drawFrame(canvas, frame).then(paintOverlay),
    onError: () => renderPanel(panelEl, client.model, state, () => undefined),
  });
  bindPanel(panelEl, client, state);
  client.connect();

  const sendCamera = (drag: boolean) =>
    client.setCamera(orbitCamera(orbit, canvas.clientWidth, canvas.clientHeight), drag);

  let dragging = false;
  let moveMode = false;
  let lastX = 0;
  let lastY = 0;
  canvas.onpointerdown = (ev) => {
    dragging = true;
    moveMode = ev.shiftKey;
    lastX = ev.clientX;
    lastY = ev.clientY;
    canvas.setPointerCapture(ev.pointerId);
  };
  canvas.onpointermove = (ev) => {
    if (!dragging) return;
    const dx = ev.clientX - lastX;
    const dy = ev.clientY - lastY;
    lastX = ev.clientX;
    lastY = ev.clientY;
    if (moveMode && state.selected) {
      const spec = specimenById(client.model, state.selected);
      if (spec && spec.owner === client.model.selfId) {
        const step = orbit.distance / canvas.clientWidth;
        const [x, y, z] = spec.transform.position;
        client.moveSpecimen(state.selected, [x + dx * step, y - dy * step, z]);
      }
      return;
    }
    orbit = applyDrag(orbit, dx, dy, canvas.clientWidth, canvas.clientHeight);
    sendCamera(true);
  };
  canvas.onpointerup = (ev) => {
    dragging = false;
    canvas.releasePointerCapture(ev.pointerId);
    sendCamera(false);
  };
  canvas.onwheel = (ev) => {
    ev.preventDefault();
    orbit = applyZoom(orbit, Math.sign(ev.deltaY));
    sendCamera(false);
  };

  // first frame once the socket is up
  const kickoff = setInterval(() => {
    if (client.model.connected) {
      sendCamera(false);
      clearInterval(kickoff);
    }
  }, 200);
  return client;
}

if (typeof document !== "undefined" && document.getElementById("panel")) {
  startPanel(
    document.getElementById("panel") as HTMLElement,
    document.getElementById("viewport") as HTMLCanvasElement,
  );
}
