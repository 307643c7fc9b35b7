// Presence overlay: other peers' camera poses projected into our view and
// drawn as markers on top of the streamed frame.

import type { CameraParams, PeerView } from "./protocol.js";

export interface ScreenPoint {
  x: number; // [0, 1] across the frame, left to right
  y: number; // [0, 1] down the frame
  visible: boolean;
}

function sub(a: number[], b: number[]): [number, number, number] {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function norm(v: [number, number, number]): [number, number, number] {
  const len = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / len, v[1] / len, v[2] / len];
}

function cross(a: number[], b: number[]): [number, number, number] {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function dot(a: number[], b: number[]): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

/** Pinhole projection matching the server's camera model. */
export function projectToScreen(camera: CameraParams, world: [number, number, number]): ScreenPoint {
  const fwd = norm(sub(camera.target, camera.pos));
  const upHint: [number, number, number] =
    Math.abs(fwd[1]) > 0.99 ? [0, 0, 1] : [0, 1, 0];
  const right = norm(cross(fwd, upHint));
  const up = cross(right, fwd);
  const rel = sub(world, camera.pos);
  const depth = dot(rel, fwd);
  if (depth <= 1e-6) {
    return { x: 0, y: 0, visible: false };
  }
  const tanHalf = Math.tan(((camera.fov_deg ?? 45) * Math.PI) / 360);
  const aspect = (camera.width ?? 1) / (camera.height ?? 1);
  const px = dot(rel, right) / (depth * tanHalf * aspect);
  const py = dot(rel, up) / (depth * tanHalf);
  const x = (px + 1) / 2;
  const y = (1 - py) / 2;
  const visible = x >= 0 && x <= 1 && y >= 0 && y <= 1;
  return { x, y, visible };
}

export interface PeerMarker {
  name: string;
  x: number;
  y: number;
}

export function peerMarkers(camera: CameraParams, peers: ReadonlyArray<PeerView>): PeerMarker[] {
  const markers: PeerMarker[] = [];
  for (const peer of peers) {
    if (peer.self || !peer.pose) continue;
    const point = projectToScreen(camera, peer.pose.position);
    if (point.visible) {
      markers.push({ name: peer.name || peer.id.slice(0, 8), x: point.x, y: point.y });
    }
  }
  return markers;
}

export function drawMarkers(canvas: HTMLCanvasElement, markers: PeerMarker[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.save();
  ctx.fillStyle = "#7fd";
  ctx.strokeStyle = "#0a0f12";
  ctx.font = "10px system-ui";
  for (const marker of markers) {
    const x = marker.x * canvas.width;
    const y = marker.y * canvas.height;
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
    ctx.stroke();
    ctx.fillText(marker.name, x + 6, y + 3);
  }
  ctx.restore();
}
