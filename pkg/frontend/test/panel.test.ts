// @vitest-environment happy-dom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { OperatorPanel } from "../src/panel.js";
import type { FeedHandlers } from "../src/sse.js";
import type { EventFeed } from "../src/sse.js";
import { snapshot } from "./mimic.test.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

interface Harness {
  panel: OperatorPanel;
  handlers: FeedHandlers;
  fetchMock: ReturnType<typeof vi.fn>;
  root: HTMLElement;
}

async function makePanel(routes: Record<string, (init?: RequestInit) => Response>): Promise<Harness> {
  const fetchMock = vi.fn(async (url: string | URL, init?: RequestInit) => {
    const path = String(url).replace(/^https?:\/\/[^/]+/, "");
    const key = `${init?.method ?? "GET"} ${path}`;
    const handler = routes[key];
    if (!handler) throw new Error(`unexpected request: ${key}`);
    return handler(init);
  });
  const api = new ApiClient("", fetchMock as unknown as typeof fetch);
  const root = document.createElement("div");
  document.body.appendChild(root);
  let captured: FeedHandlers | null = null;
  const panel = new OperatorPanel(root, api, (handlers) => {
    captured = handlers;
    return { connect: async () => {}, close: () => {} } as unknown as EventFeed;
  });
  await panel.init();
  return { panel, handlers: captured!, fetchMock, root };
}

const idleRoutes = {
  "GET /state": () => jsonResponse({ engine: "idle", active_run: null, machine: snapshot() }),
  "GET /runs": () => jsonResponse({ runs: [] }),
  "GET /config": () => jsonResponse({ version: 1, config: { pore_um: {} } }),
};

describe("OperatorPanel", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("selecting soil sample posts a cyst-extraction run and switches to the live view", async () => {
    let startBody: any = null;
    const harness = await makePanel({
      ...idleRoutes,
      "POST /runs": (init) => {
        startBody = JSON.parse(String(init?.body));
        return jsonResponse({ run_id: "run-000001", script: "cyst_extraction" }, 202);
      },
    });
    await harness.panel.start("soil");
    expect(startBody.input_type).toBe("soil");
    expect(harness.panel.state.activeRun?.script).toBe("cyst_extraction");
    expect(harness.root.querySelector("[data-engine]")?.textContent).toContain("run-000001");
  });

  it("disables start buttons while a run is active (no request sent)", async () => {
    const post = vi.fn();
    const harness = await makePanel({
      ...idleRoutes,
      "GET /state": () => jsonResponse({ engine: "running", active_run: { run_id: "run-9", script: "cyst_extraction", seed: 0, status: "running" }, machine: snapshot() }),
      "POST /runs": () => {
        post();
        return jsonResponse({}, 202);
      },
    });
    const button = harness.root.querySelector<HTMLButtonElement>("[data-start='soil']")!;
    expect(button.disabled).toBe(true);
    await harness.panel.start("soil");
    expect(post).not.toHaveBeenCalled();
  });

  it("engine-busy responses surface as a blocking banner", async () => {
    const harness = await makePanel({
      ...idleRoutes,
      "POST /runs": () => jsonResponse({ error: "engine_busy", message: "one sample at a time" }, 409),
    });
    await harness.panel.start("cyst");
    expect(harness.panel.state.banner).toContain("engine busy");
    expect(harness.root.querySelector("[data-banner]")?.classList.contains("hidden")).toBe(false);
  });

  it("telemetry events drive the mimic and the seq progress bar", async () => {
    const harness = await makePanel(idleRoutes);
    harness.handlers.onEvent({
      type: "snapshot", engine: "running",
      active_run: { run_id: "run-2", script: "egg_extraction", seed: 0, status: "running" },
      machine: snapshot(),
    });
    harness.handlers.onEvent({
      type: "telemetry", run_id: "run-2", seq: 9, t_ms: 1234, step: 4, action: "grind", phase: "enter",
      machine: snapshot({ grinder: { pad_height_mm: 0, spinning: true, rpm: 500 }, drill_relay: true }),
    });
    expect(harness.root.querySelector("[data-grinder]")?.getAttribute("data-spinning")).toBe("true");
    const width = (harness.root.querySelector("[data-progress]") as HTMLElement).style.width;
    expect(width).toBe("25%"); // seq 9 of 2 x 18 steps
    expect(harness.root.querySelector("[data-stepline]")?.textContent).toContain("grind");
  });

  it("abort requires a confirmation tap and tolerates the completion race", async () => {
    const abortCalls = vi.fn();
    const harness = await makePanel({
      ...idleRoutes,
      "POST /runs/run-3/abort": () => {
        abortCalls();
        return jsonResponse({ error: "not_running", message: "already done" }, 409);
      },
    });
    harness.handlers.onEvent({
      type: "snapshot", engine: "running",
      active_run: { run_id: "run-3", script: "cyst_extraction", seed: 0, status: "running" },
      machine: snapshot(),
    });
    await harness.panel.abort(); // arms the confirmation only
    expect(abortCalls).not.toHaveBeenCalled();
    await harness.panel.abort(); // confirmed
    expect(abortCalls).toHaveBeenCalledTimes(1);
    expect(harness.panel.state.banner).toBeNull(); // race with completion is silent
  });

  it("terminal events clear the active run and refresh history", async () => {
    let listCalls = 0;
    const harness = await makePanel({
      ...idleRoutes,
      "GET /runs": () => {
        listCalls += 1;
        return jsonResponse({
          runs: [{ run_id: "run-4", script: "cyst_extraction", seed: 1, status: "aborted", output_counts: {} }],
        });
      },
    });
    harness.handlers.onEvent({ type: "run_terminal", run_id: "run-4", status: "aborted" });
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(harness.panel.state.engine).toBe("idle");
    expect(listCalls).toBeGreaterThan(1);
    expect(harness.root.querySelector("[data-run='run-4']")?.textContent).toContain("aborted");
  });
});
