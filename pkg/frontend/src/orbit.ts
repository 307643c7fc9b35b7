// Orbit camera: the pointer drags azimuth/elevation around a target, the
// wheel zooms. A full horizontal drag across the canvas is one full turn,
// so dragging a quarter of the width swings the azimuth by pi/2.

import type { CameraParams } from "./protocol.js";

export interface OrbitState {
  azimuth: number; // radians around +y, 0 looks down -z toward the target
  elevation: number; // radians above the horizon
  distance: number;
  target: [number, number, number];
}

export function defaultOrbit(distance = 120): OrbitState {
  return { azimuth: 0, elevation: 0, distance, target: [0, 0, 0] };
}

const MAX_ELEVATION = Math.PI / 2 - 0.01;

export function applyDrag(
  orbit: OrbitState,
  dxPixels: number,
  dyPixels: number,
  canvasWidth: number,
  canvasHeight: number,
): OrbitState {
  const azimuth = orbit.azimuth + (dxPixels / canvasWidth) * 2 * Math.PI;
  const rawElevation = orbit.elevation + (dyPixels / canvasHeight) * Math.PI;
  const elevation = Math.min(MAX_ELEVATION, Math.max(-MAX_ELEVATION, rawElevation));
  return { ...orbit, azimuth, elevation };
}

export function applyZoom(orbit: OrbitState, wheelSteps: number): OrbitState {
  const distance = Math.max(1, orbit.distance * Math.pow(1.1, wheelSteps));
  return { ...orbit, distance };
}

export function orbitPosition(orbit: OrbitState): [number, number, number] {
  const { azimuth, elevation, distance, target } = orbit;
  const cosEl = Math.cos(elevation);
  return [
    target[0] + distance * cosEl * Math.sin(azimuth),
    target[1] + distance * Math.sin(elevation),
    target[2] + distance * cosEl * Math.cos(azimuth),
  ];
}

export function orbitCamera(
  orbit: OrbitState,
  width: number,
  height: number,
  fovDeg = 45,
): CameraParams {
  return {
    pos: orbitPosition(orbit),
    target: orbit.target,
    fov_deg: fovDeg,
    width,
    height,
  };
}
