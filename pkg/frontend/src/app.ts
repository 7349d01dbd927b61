/** Viewer application: pickers, orbit controls, wavelet budget, compare mode.
 *
 * Continuous controls (rotation slider, orbit drag) are debounced 150 ms and
 * request 128x128 previews while active; release (or a discrete control)
 * fires immediately at full resolution.  State round-trips through the URL.
 */

import { ApiClient, ApiError, RenderGate } from "./client";
import { debounce } from "./debounce";
import { applyDrag, applyZoom, orbitToCamera } from "./orbit";
import { ComponentsMode, ViewerState, WAVELET_CHOICES,
         stateFromQuery, stateToQuery } from "./state";
import type { RenderRequest } from "./types";

const DEBOUNCE_MS = 150;
const PREVIEW_SIZE = 128;
const FULL_SIZE = 256;

export function buildRequest(s: ViewerState, size: number,
                             includeDirect: boolean): RenderRequest {
  return {
    scene: s.scene,
    checkpoint: s.checkpoint,
    env: s.env,
    rotation_deg: s.rotationDeg,
    camera: orbitToCamera(s.orbit, size, size),
    num_wavelets: s.numWavelets,
    selection: "area_weighted",
    include_direct: includeDirect,
    direct_spp: 32,
    direct_seed: 0,
  };
}

export class ViewerApp {
  state: ViewerState;
  readonly gate = new RenderGate();
  readonly compareGate = new RenderGate();
  private requestPreview = false;

  onFrame: (url: string, renderMs: number, wavelets: number) => void = () => {};
  onCompareFrame: (url: string) => void = () => {};
  onError: (message: string) => void = () => {};
  onStateChange: (s: ViewerState) => void = () => {};

  private readonly debouncedRender = debounce(() => this.renderNow(), DEBOUNCE_MS);

  constructor(private client: ApiClient, initialQuery = "") {
    this.state = stateFromQuery(initialQuery);
  }

  async connect(): Promise<void> {
    const [scenes, envs, ckpts] = await Promise.all([
      this.client.listScenes(), this.client.listEnvs(), this.client.listCheckpoints(),
    ]);
    if (!this.state.scene && scenes.scenes.length) {
      this.state.scene = scenes.scenes[0].id;
    }
    if (!this.state.env && envs.envs.length) {
      this.state.env = envs.envs[0].id;
    }
    if (!this.state.checkpoint && ckpts.checkpoints.length) {
      this.state.checkpoint = ckpts.checkpoints[0].id;
    }
    this.onStateChange(this.state);
  }

  /** Continuous interaction (slider drag, orbit drag): debounced preview. */
  interact(delta: Partial<ViewerState>): void {
    Object.assign(this.state, delta);
    this.requestPreview = true;
    this.onStateChange(this.state);
    this.debouncedRender();
  }

  /** Discrete interaction (picker, budget selector, release): immediate. */
  commit(delta: Partial<ViewerState> = {}): void {
    Object.assign(this.state, delta);
    this.requestPreview = false;
    this.onStateChange(this.state);
    this.debouncedRender.cancel();
    this.renderNow();
  }

  drag(dx: number, dy: number): void {
    this.interact({ orbit: applyDrag(this.state.orbit, dx, dy) });
  }

  zoom(wheelDelta: number): void {
    this.interact({ orbit: applyZoom(this.state.orbit, wheelDelta) });
  }

  queryString(): string {
    return stateToQuery(this.state);
  }

  renderNow(): void {
    const s = this.state;
    if (!s.scene || !s.checkpoint || !s.env) return;
    const size = this.requestPreview ? PREVIEW_SIZE : FULL_SIZE;
    const includeDirect = s.components === "full";
    const { seq, signal } = this.gate.issue();
    this.client.render(buildRequest(s, size, includeDirect), seq, signal)
      .then((frame) => {
        if (!this.gate.accept(frame.seq)) return;
        this.onFrame(URL.createObjectURL(frame.blob), frame.renderMs,
                     frame.waveletsUsed);
      })
      .catch((err) => this.reportError(err));
    if (s.components === "compare") {
      const cmp = this.compareGate.issue();
      this.client.render(buildRequest(s, size, true), cmp.seq, cmp.signal)
        .then((frame) => {
          if (!this.compareGate.accept(frame.seq)) return;
          this.onCompareFrame(URL.createObjectURL(frame.blob));
        })
        .catch((err) => this.reportError(err));
    }
  }

  private reportError(err: unknown): void {
    if (err instanceof DOMException && err.name === "AbortError") return;
    if (err instanceof ApiError) {
      const fields = err.fields ? ` ${JSON.stringify(err.fields)}` : "";
      this.onError(`${err.code}: ${err.message}${fields}`);
    } else {
      this.onError(String(err));
    }
  }
}

export function mount(root: HTMLElement, client: ApiClient): ViewerApp {
  const app = new ViewerApp(client, location.search);

  root.innerHTML = `
    <div class="toolbar">
      <label>Scene <select id="scene"></select></label>
      <label>Checkpoint <select id="ckpt"></select></label>
      <label>Environment <select id="env"></select></label>
      <label>Rotation <input id="rot" type="range" min="0" max="360" step="1">
        <span id="rotval"></span>°</label>
      <label>Wavelets <select id="k">${WAVELET_CHOICES.map(
        (k) => `<option value="${k}">${k}</option>`).join("")}</select></label>
      <label>View <select id="view">
        <option value="indirect">indirect</option>
        <option value="full">full</option>
        <option value="compare">compare</option>
      </select></label>
      <span id="badge" class="badge"></span>
    </div>
    <div id="banner" class="banner" hidden></div>
    <div class="stage">
      <img id="frame" width="512" height="512" alt="render">
      <img id="frame2" width="512" height="512" alt="full render" hidden>
    </div>`;

  const el = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`#${id}`)!;
  const frame = el<HTMLImageElement>("frame");
  const frame2 = el<HTMLImageElement>("frame2");
  const badge = el<HTMLSpanElement>("badge");
  const banner = el<HTMLDivElement>("banner");

  app.onFrame = (url, ms, k) => {
    frame.src = url;
    badge.textContent = `${ms.toFixed(0)} ms · ${k} wavelets`;
    banner.hidden = true;
  };
  app.onCompareFrame = (url) => {
    frame2.src = url;
  };
  app.onError = (msg) => {
    banner.textContent = msg;
    banner.hidden = false;
    banner.onclick = () => (banner.hidden = true);
  };
  app.onStateChange = (s) => {
    el<HTMLSelectElement>("scene").value = s.scene;
    el<HTMLSelectElement>("ckpt").value = s.checkpoint;
    el<HTMLSelectElement>("env").value = s.env;
    el<HTMLInputElement>("rot").value = String(s.rotationDeg);
    el<HTMLSpanElement>("rotval").textContent = String(Math.round(s.rotationDeg));
    el<HTMLSelectElement>("k").value = String(s.numWavelets);
    el<HTMLSelectElement>("view").value = s.components;
    frame2.hidden = s.components !== "compare";
    history.replaceState(null, "", `?${app.queryString()}`);
  };

  el<HTMLInputElement>("rot").addEventListener("input", (e) =>
    app.interact({ rotationDeg: Number((e.target as HTMLInputElement).value) }));
  el<HTMLInputElement>("rot").addEventListener("change", () => app.commit());
  el<HTMLSelectElement>("k").addEventListener("change", (e) =>
    app.commit({ numWavelets: Number((e.target as HTMLSelectElement).value) }));
  el<HTMLSelectElement>("view").addEventListener("change", (e) =>
    app.commit({ components: (e.target as HTMLSelectElement).value as ComponentsMode }));
  for (const id of ["scene", "ckpt", "env"] as const) {
    el<HTMLSelectElement>(id).addEventListener("change", (e) => {
      const v = (e.target as HTMLSelectElement).value;
      app.commit(id === "scene" ? { scene: v }
                 : id === "ckpt" ? { checkpoint: v } : { env: v });
    });
  }

  let dragging = false;
  let last: [number, number] = [0, 0];
  frame.addEventListener("pointerdown", (e) => {
    dragging = true;
    last = [e.clientX, e.clientY];
    frame.setPointerCapture(e.pointerId);
  });
  frame.addEventListener("pointermove", (e) => {
    if (!dragging) return;
    app.drag(e.clientX - last[0], e.clientY - last[1]);
    last = [e.clientX, e.clientY];
  });
  frame.addEventListener("pointerup", () => {
    dragging = false;
    app.commit();
  });
  frame.addEventListener("wheel", (e) => {
    e.preventDefault();
    app.zoom(e.deltaY);
  });

  void app.connect().then(async () => {
    const [scenes, envs, ckpts] = await Promise.all([
      client.listScenes(), client.listEnvs(), client.listCheckpoints(),
    ]);
    el<HTMLSelectElement>("scene").innerHTML = scenes.scenes.map(
      (s) => `<option>${s.id}</option>`).join("");
    el<HTMLSelectElement>("env").innerHTML = envs.envs.map(
      (s) => `<option>${s.id}</option>`).join("");
    el<HTMLSelectElement>("ckpt").innerHTML = ckpts.checkpoints.map(
      (s) => `<option>${s.id}</option>`).join("");
    app.onStateChange(app.state);
    app.commit();
  }).catch((e) => app.onError(String(e)));

  return app;
}
