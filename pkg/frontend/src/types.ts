/** Request/response shapes of the render service (see ../api-schema.json). */

export interface CameraJson {
  position: [number, number, number];
  look_at: [number, number, number];
  up?: [number, number, number];
  fov_deg: number;
  width: number;
  height: number;
}

export interface RenderRequest {
  scene: string;
  checkpoint: string;
  env: string;
  rotation_deg: number;
  camera: CameraJson;
  num_wavelets: number;
  selection: "area_weighted" | "magnitude";
  include_direct: boolean;
  direct_spp: number;
  direct_seed: number;
}

export interface SceneInfo {
  id: string;
  objects: number;
  camera_presets: string[];
}

export interface EnvInfo {
  id: string;
  file: string;
}

export interface CheckpointInfo {
  id: string;
  face_res: number;
  num_wavelet_slots: number;
  scene_hash: string;
  hash: string;
}

export interface RenderResultFrame {
  blob: Blob;
  seq: number;
  renderMs: number;
  waveletsUsed: number;
  etag: string;
}
