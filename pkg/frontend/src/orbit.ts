/** Orbit camera: spherical coordinates around a target, Y up. */

import type { OrbitCamera } from "./state";
import type { CameraJson } from "./types";

const DEG = Math.PI / 180;

export function orbitToCamera(o: OrbitCamera, width: number, height: number,
                              fovDeg = 50): CameraJson {
  const az = o.azimuthDeg * DEG;
  const el = o.elevationDeg * DEG;
  const [tx, ty, tz] = o.target;
  return {
    position: [
      tx + o.distance * Math.cos(el) * Math.sin(az),
      ty + o.distance * Math.sin(el),
      tz + o.distance * Math.cos(el) * Math.cos(az),
    ],
    look_at: [tx, ty, tz],
    up: [0, 1, 0],
    fov_deg: fovDeg,
    width,
    height,
  };
}

/** Pointer-drag deltas (pixels) to orbit angles; clamps elevation. */
export function applyDrag(o: OrbitCamera, dxPx: number, dyPx: number): OrbitCamera {
  const azimuthDeg = (o.azimuthDeg - dxPx * 0.4) % 360;
  const elevationDeg = Math.min(85, Math.max(5, o.elevationDeg + dyPx * 0.3));
  return { ...o, azimuthDeg: azimuthDeg < 0 ? azimuthDeg + 360 : azimuthDeg, elevationDeg };
}

export function applyZoom(o: OrbitCamera, wheelDelta: number): OrbitCamera {
  const distance = Math.min(12, Math.max(0.8, o.distance * Math.exp(wheelDelta * 0.001)));
  return { ...o, distance };
}
