/**
 * Thin typed client for the control API. The panel's only mutating calls are
 * startRun, abortRun, and putConfig, per the contract.
 */

import type { InputType, RunSummary } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function throwFrom(response: Response): Promise<never> {
  let code = "unknown";
  let message = response.statusText;
  try {
    const body = await response.json();
    code = body.error ?? code;
    message = body.message ?? message;
  } catch {
    // non-JSON error body; keep defaults
  }
  throw new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<any> {
    const response = await this.fetchImpl(`${this.base}${path}`, init);
    if (!response.ok) await throwFrom(response);
    return response.json();
  }

  startRun(inputType: InputType, options: { profile?: string; seed?: number; speed?: number } = {}) {
    return this.request("/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ input_type: inputType, ...options }),
    }) as Promise<{ run_id: string; script: string }>;
  }

  abortRun(runId: string) {
    return this.request(`/runs/${runId}/abort`, { method: "POST" }) as Promise<{ status: string }>;
  }

  getState() {
    return this.request("/state") as Promise<{
      engine: "idle" | "running";
      active_run: RunSummary | null;
      machine: unknown;
    }>;
  }

  getRun(runId: string) {
    return this.request(`/runs/${runId}`) as Promise<RunSummary & { events?: unknown[] }>;
  }

  listRuns() {
    return this.request("/runs") as Promise<{ runs: RunSummary[] }>;
  }

  getConfig() {
    return this.request("/config") as Promise<{ version: number; config: unknown }>;
  }

  putConfig(document: unknown) {
    return this.request("/config", {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(document),
    }) as Promise<{ version: number }>;
  }
}
