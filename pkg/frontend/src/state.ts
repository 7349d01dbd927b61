/** Viewer state and its URL-query serialization (reload reproduces the view). */

export type ComponentsMode = "indirect" | "full" | "compare";

export interface OrbitCamera {
  azimuthDeg: number;
  elevationDeg: number;
  distance: number;
  target: [number, number, number];
}

export interface ViewerState {
  scene: string;
  checkpoint: string;
  env: string;
  rotationDeg: number;
  orbit: OrbitCamera;
  numWavelets: number; // 16 | 32 | 64 | 128
  components: ComponentsMode;
}

export const WAVELET_CHOICES = [16, 32, 64, 128];

export function defaultState(): ViewerState {
  return {
    scene: "",
    checkpoint: "",
    env: "",
    rotationDeg: 0,
    orbit: { azimuthDeg: 30, elevationDeg: 35, distance: 3.0, target: [0, 0.5, 0] },
    numWavelets: 64,
    components: "indirect",
  };
}

const NUM_FIELDS: Record<string, number> = { rot: 3, az: 2, el: 2, d: 3, k: 0 };

function fmt(x: number, digits: number): string {
  const s = x.toFixed(digits);
  return s.replace(/\.?0+$/, "") || "0";
}

export function stateToQuery(s: ViewerState): string {
  const q = new URLSearchParams();
  q.set("scene", s.scene);
  q.set("ckpt", s.checkpoint);
  q.set("env", s.env);
  q.set("rot", fmt(s.rotationDeg, NUM_FIELDS.rot));
  q.set("az", fmt(s.orbit.azimuthDeg, NUM_FIELDS.az));
  q.set("el", fmt(s.orbit.elevationDeg, NUM_FIELDS.el));
  q.set("d", fmt(s.orbit.distance, NUM_FIELDS.d));
  q.set("tgt", s.orbit.target.map((v) => fmt(v, 3)).join(","));
  q.set("k", String(s.numWavelets));
  q.set("view", s.components);
  return q.toString();
}

export function stateFromQuery(query: string, base?: ViewerState): ViewerState {
  const s = base ? structuredClone(base) : defaultState();
  const q = new URLSearchParams(query);
  const num = (key: string, fallback: number) => {
    const v = q.get(key);
    const parsed = v === null ? NaN : Number(v);
    return Number.isFinite(parsed) ? parsed : fallback;
  };
  s.scene = q.get("scene") ?? s.scene;
  s.checkpoint = q.get("ckpt") ?? s.checkpoint;
  s.env = q.get("env") ?? s.env;
  s.rotationDeg = num("rot", s.rotationDeg);
  s.orbit.azimuthDeg = num("az", s.orbit.azimuthDeg);
  s.orbit.elevationDeg = num("el", s.orbit.elevationDeg);
  s.orbit.distance = num("d", s.orbit.distance);
  const tgt = (q.get("tgt") ?? "").split(",").map(Number);
  if (tgt.length === 3 && tgt.every(Number.isFinite)) {
    s.orbit.target = [tgt[0], tgt[1], tgt[2]];
  }
  const k = num("k", s.numWavelets);
  s.numWavelets = WAVELET_CHOICES.includes(k) ? k : s.numWavelets;
  const view = q.get("view");
  if (view === "indirect" || view === "full" || view === "compare") {
    s.components = view;
  }
  return s;
}
