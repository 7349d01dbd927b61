/** Scripted interaction test for the stale-response discipline: however the
 * network reorders responses, a frame from an older request is never shown
 * after a frame from a newer one. */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ViewerApp } from "./app";
import { ApiClient, RenderGate } from "./client";

const PNG = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

interface Pending {
  body: { rotation_deg: number; num_wavelets: number;
          camera: { width: number; height: number } };
  resolve: (r: Response) => void;
  reject: (e: unknown) => void;
  aborted: boolean;
}

class ScriptedNetwork {
  pending: Pending[] = [];

  fetchFn: typeof fetch = ((url: string, init?: RequestInit) =>
    new Promise<Response>((resolve, reject) => {
      const entry: Pending = {
        body: init?.body ? JSON.parse(init.body as string) : ({} as never),
        resolve,
        reject,
        aborted: false,
      };
      init?.signal?.addEventListener("abort", () => {
        entry.aborted = true;
      });
      this.pending.push(entry);
    })) as typeof fetch;

  /** Deliver response i regardless of abort state (a response already in
   * flight when the client aborted -- the race under test). */
  deliver(i: number, wavelets = 64): void {
    this.pending[i].resolve(new Response(PNG, {
      status: 200,
      headers: { "X-Render-Ms": "12.0", "X-Wavelets-Used": String(wavelets),
                 "ETag": '"x"' },
    }));
  }
}

function makeApp(net: ScriptedNetwork): ViewerApp {
  const app = new ViewerApp(new ApiClient("", net.fetchFn));
  app.state.scene = "fixture";
  app.state.checkpoint = "desk";
  app.state.env = "probe";
  return app;
}

describe("stale-response discipline", () => {
  beforeEach(() => {
    vi.useFakeTimers();
    vi.stubGlobal("URL", Object.assign(URL, {
      createObjectURL: (b: Blob) => `blob:${(b as { size: number }).size}:${Math.random()}`,
    }));
  });
  afterEach(() => vi.useRealTimers());

  it("render gate accepts only increasing sequence numbers", () => {
    const gate = new RenderGate();
    const a = gate.issue();
    const b = gate.issue();
    expect(gate.accept(b.seq)).toBe(true);
    expect(gate.accept(a.seq)).toBe(false); // late old response discarded
    expect(a.signal.aborted).toBe(true);    // superseded request was aborted
    expect(b.signal.aborted).toBe(false);
  });

  it("an earlier response arriving later is never displayed", async () => {
    const net = new ScriptedNetwork();
    const app = makeApp(net);
    const shown: number[] = [];
    app.onFrame = (_url, _ms, wavelets) => shown.push(wavelets);

    // two rapid camera drags, each past the debounce window
    app.drag(10, 0);
    vi.advanceTimersByTime(150);
    app.drag(10, 0);
    vi.advanceTimersByTime(150);
    expect(net.pending.length).toBe(2);
    expect(net.pending[0].aborted).toBe(true);

    net.deliver(1, 222); // newest first
    await vi.waitFor(() => expect(shown).toEqual([222]));
    net.deliver(0, 111); // stale response straggles in afterwards
    await Promise.resolve();
    await Promise.resolve();
    expect(shown).toEqual([222]); // never displayed out of order
  });

  it("rapid slider changes collapse to one request after the debounce", () => {
    const net = new ScriptedNetwork();
    const app = makeApp(net);
    for (let v = 0; v <= 120; v += 10) {
      app.interact({ rotationDeg: v });
      vi.advanceTimersByTime(16);
    }
    expect(net.pending.length).toBe(0);
    vi.advanceTimersByTime(150);
    expect(net.pending.length).toBe(1);
    expect(net.pending[0].body.rotation_deg).toBe(120);
  });

  it("a burst of interleaved interactions keeps frames in order", async () => {
    const net = new ScriptedNetwork();
    const app = makeApp(net);
    const shown: number[] = [];
    app.onFrame = (_url, _ms, wavelets) => shown.push(wavelets);

    for (let i = 0; i < 5; i++) {
      app.drag(5, 0);
      vi.advanceTimersByTime(150); // each drag issues its own request
    }
    expect(net.pending.length).toBe(5);
    // deliver shuffled: 2, 4, 0, 3, 1 -- tag payloads by request index
    for (const i of [2, 4, 0, 3, 1]) net.deliver(i, i);
    await vi.waitFor(() => expect(shown.length).toBeGreaterThan(0));
    await Promise.resolve();
    await Promise.resolve();
    // displayed wavelet tags must be strictly increasing request indices
    for (let i = 1; i < shown.length; i++) {
      expect(shown[i]).toBeGreaterThan(shown[i - 1]);
    }
    expect(shown[shown.length - 1]).toBe(4); // newest frame wins eventually
  });

  it("preview during drag uses 128x128, release goes full resolution", () => {
    const net = new ScriptedNetwork();
    const app = makeApp(net);
    app.drag(3, 0);
    vi.advanceTimersByTime(150);
    expect(net.pending.at(-1)!.body.camera.width).toBe(128);
    app.commit();
    expect(net.pending.at(-1)!.body.camera.width).toBe(256);
  });

  it("wavelet selector updates the badge value through the response header", async () => {
    const net = new ScriptedNetwork();
    const app = makeApp(net);
    let badge = 0;
    app.onFrame = (_url, _ms, wavelets) => (badge = wavelets);
    app.commit({ numWavelets: 128 });
    expect(net.pending.at(-1)!.body.num_wavelets).toBe(128);
    net.deliver(net.pending.length - 1, 128);
    await vi.waitFor(() => expect(badge).toBe(128));
  });
});
