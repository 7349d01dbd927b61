/** HTTP client plus the stale-response gate.
 *
 * Every render carries a monotonically increasing sequence number; issuing a
 * new one aborts the previous in-flight fetch, and a response is displayed
 * only if its sequence is newer than the newest already displayed.  A frame
 * from an older request can therefore never appear after a newer one.
 */

import type { CheckpointInfo, EnvInfo, RenderRequest, RenderResultFrame,
              SceneInfo } from "./types";

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string,
              public fields: unknown = null) {
    super(message);
  }
}

export class RenderGate {
  private nextSeq = 1;
  private displayedSeq = 0;
  private controller: AbortController | null = null;

  issue(): { seq: number; signal: AbortSignal } {
    this.controller?.abort();
    this.controller = new AbortController();
    return { seq: this.nextSeq++, signal: this.controller.signal };
  }

  /** True iff this sequence may be displayed; records it as displayed. */
  accept(seq: number): boolean {
    if (seq <= this.displayedSeq) return false;
    this.displayedSeq = seq;
    return true;
  }

  get lastDisplayed(): number {
    return this.displayedSeq;
  }
}

async function readError(res: Response): Promise<ApiError> {
  let code = `http_${res.status}`;
  let message = res.statusText;
  let fields: unknown = null;
  try {
    const body = await res.json();
    if (body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    } else if (body.detail) {
      code = "validation_error";
      fields = body.detail;
      message = "invalid request";
    }
  } catch {
    /* non-JSON body */
  }
  return new ApiError(res.status, code, message, fields);
}

export class ApiClient {
  constructor(private baseUrl: string,
              private fetchFn: typeof fetch = (...a) => fetch(...a)) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!res.ok) throw await readError(res);
    return res.json() as Promise<T>;
  }

  listScenes(): Promise<{ scenes: SceneInfo[] }> {
    return this.getJson("/api/v1/scenes");
  }

  listEnvs(): Promise<{ envs: EnvInfo[] }> {
    return this.getJson("/api/v1/envs");
  }

  listCheckpoints(): Promise<{ checkpoints: CheckpointInfo[] }> {
    return this.getJson("/api/v1/checkpoints");
  }

  envPreviewUrl(envId: string, faceRes = 32): string {
    return `${this.baseUrl}/api/v1/envmap/${envId}/preview?face_res=${faceRes}`;
  }

  async render(req: RenderRequest, seq: number,
               signal?: AbortSignal): Promise<RenderResultFrame> {
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
      signal,
    });
    if (!res.ok) throw await readError(res);
    return {
      blob: await res.blob(),
      seq,
      renderMs: Number(res.headers.get("X-Render-Ms") ?? "0"),
      waveletsUsed: Number(res.headers.get("X-Wavelets-Used") ?? "0"),
      etag: res.headers.get("ETag") ?? "",
    };
  }
}
