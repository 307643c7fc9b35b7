// Control panel DOM: specimen list with load buttons, viz controls, roster,
// connection banner. All values render from the model; user input only
// emits ops.

import type { GatewayClient } from "./client.js";
import { rosterOf, specimenById, type UiSceneModel } from "./sceneModel.js";

const LUTS = ["grayscale", "grayscale_inverted", "fire"];
const MATERIALS = ["default_gray", "glass", "water", "crystal", "pearl"];
const QUALITIES = ["low", "medium", "high"] as const;

export interface PanelElements {
  banner: HTMLElement;
  roster: HTMLUListElement;
  specimenList: HTMLUListElement;
  loadPath: HTMLInputElement;
  loadButton: HTMLButtonElement;
  scale: HTMLInputElement;
  opacity: HTMLInputElement;
  lut: HTMLSelectElement;
  material: HTMLSelectElement;
  quality: HTMLSelectElement;
  planeEnabled: HTMLInputElement;
  planeOffset: HTMLInputElement;
  grabButton: HTMLButtonElement;
  errorLine: HTMLElement;
}

export interface PanelState {
  selected: string | null;
}

function option(value: string): HTMLOptionElement {
  const el = document.createElement("option");
  el.value = value;
  el.textContent = value;
  return el;
}

export function buildPanel(root: HTMLElement): PanelElements {
  root.innerHTML = `
    <div id="banner" class="banner">connecting…</div>
    <section><h3>Specimens</h3>
      <ul id="specimens"></ul>
      <input id="load-path" placeholder="/path/to/volume.npy" />
      <button id="load-btn">Load</button>
    </section>
    <section><h3>Visualization</h3>
      <label>Scale <input id="scale" type="range" min="0.1" max="4" step="0.1" value="1"></label>
      <label>Material <select id="material"></select></label>
      <label>LUT <select id="lut"></select></label>
      <label>Opacity <input id="opacity" type="range" min="0" max="1" step="0.01" value="1"></label>
      <label>Quality <select id="quality"></select></label>
      <label>Slice <input id="plane-on" type="checkbox">
        offset <input id="plane-offset" type="range" min="-64" max="64" step="1" value="0"></label>
      <button id="grab-btn">Grab</button>
    </section>
    <section><h3>Peers</h3><ul id="roster"></ul></section>
    <div id="error-line" class="error"></div>
  `;
  const el = {
    banner: root.querySelector("#banner") as HTMLElement,
    roster: root.querySelector("#roster") as HTMLUListElement,
    specimenList: root.querySelector("#specimens") as HTMLUListElement,
    loadPath: root.querySelector("#load-path") as HTMLInputElement,
    loadButton: root.querySelector("#load-btn") as HTMLButtonElement,
    scale: root.querySelector("#scale") as HTMLInputElement,
    opacity: root.querySelector("#opacity") as HTMLInputElement,
    lut: root.querySelector("#lut") as HTMLSelectElement,
    material: root.querySelector("#material") as HTMLSelectElement,
    quality: root.querySelector("#quality") as HTMLSelectElement,
    planeEnabled: root.querySelector("#plane-on") as HTMLInputElement,
    planeOffset: root.querySelector("#plane-offset") as HTMLInputElement,
    grabButton: root.querySelector("#grab-btn") as HTMLButtonElement,
    errorLine: root.querySelector("#error-line") as HTMLElement,
  };
  LUTS.forEach((name) => el.lut.appendChild(option(name)));
  MATERIALS.forEach((name) => el.material.appendChild(option(name)));
  QUALITIES.forEach((name) => el.quality.appendChild(option(name)));
  return el;
}

export function bindPanel(
  el: PanelElements,
  client: GatewayClient,
  state: PanelState,
): void {
  el.loadButton.onclick = () => {
    if (el.loadPath.value) client.loadSpecimen(el.loadPath.value);
  };
  el.scale.oninput = () => {
    if (state.selected) client.setScale(state.selected, Number(el.scale.value));
  };
  el.opacity.oninput = () => {
    if (state.selected) client.setOpacity(state.selected, Number(el.opacity.value));
  };
  el.lut.onchange = () => {
    if (state.selected) client.setLut(state.selected, el.lut.value);
  };
  el.material.onchange = () => {
    if (state.selected) client.setMaterial(state.selected, el.material.value);
  };
  el.quality.onchange = () => {
    if (state.selected) {
      client.setQuality(state.selected, el.quality.value as "low" | "medium" | "high");
    }
  };
  const sendPlane = () => {
    if (!state.selected) return;
    client.setPlanes(state.selected, [
      [1, 0, 0, Number(el.planeOffset.value), el.planeEnabled.checked],
    ]);
  };
  el.planeEnabled.onchange = sendPlane;
  el.planeOffset.oninput = sendPlane;
  el.grabButton.onclick = () => {
    if (!state.selected) return;
    const current = specimenById(client.model, state.selected);
    if (current && current.owner === client.model.selfId) {
      client.release(state.selected);
    } else {
      client.grab(state.selected);
    }
  };
}

export function renderPanel(
  el: PanelElements,
  model: UiSceneModel,
  state: PanelState,
  onSelect: (id: string) => void,
): void {
  el.banner.textContent = model.connected
    ? `room ${model.room || "?"}`
    : "disconnected — retrying…";
  el.banner.className = model.connected ? "banner ok" : "banner down";

  el.specimenList.innerHTML = "";
  for (const spec of model.specimens) {
    const li = document.createElement("li");
    const owner = spec.owner
      ? spec.owner === model.selfId
        ? " [held by you]"
        : " [held]"
      : "";
    li.textContent = `${spec.id} (${spec.kind})${owner}`;
    if (spec.id === state.selected) li.classList.add("selected");
    li.onclick = () => onSelect(spec.id);
    el.specimenList.appendChild(li);
  }
  if (state.selected && !model.specimens.some((s) => s.id === state.selected)) {
    state.selected = null;
  }
  if (!state.selected && model.specimens.length > 0) {
    state.selected = model.specimens[0].id;
  }

  const selected = state.selected ? specimenById(model, state.selected) : undefined;
  if (selected) {
    el.scale.value = String(selected.transform.scale);
    el.opacity.value = String(selected.viz.opacity);
    el.lut.value = selected.viz.lut;
    el.material.value = selected.viz.material;
    el.quality.value = selected.viz.quality;
    const plane = selected.viz.planes[0];
    el.planeEnabled.checked = plane ? plane[4] : false;
    el.planeOffset.value = String(plane ? plane[3] : 0);
    const mine = selected.owner === model.selfId;
    el.grabButton.textContent = mine ? "Release" : "Grab";
  }

  el.roster.innerHTML = "";
  for (const name of rosterOf(model, null)) {
    const li = document.createElement("li");
    li.textContent = name;
    el.roster.appendChild(li);
  }
  el.errorLine.textContent = model.lastError ?? "";
}
