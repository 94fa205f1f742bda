/**
 * Operator panel: input-type selection, live run view with the mimic diagram
 * and a seq-driven progress bar, abort with confirmation, run history, and a
 * read-only config view. Sized for a small touchscreen: two big start
 * buttons, one big abort.
 *
 * Rendered state derives only from API snapshots and stream events.
 */

import { ApiClient, ApiError } from "./api.js";
import { renderMimic } from "./mimic.js";
import type { EventFeed, FeedHandlers } from "./sse.js";
import type { InputType, RunSummary, StreamEvent } from "./types.js";
import { SCRIPT_STEPS } from "./types.js";

export interface PanelState {
  connection: "connecting" | "live" | "lost";
  engine: "idle" | "running";
  activeRun: RunSummary | null;
  lastSeq: number;
  banner: string | null;
}

export class OperatorPanel {
  readonly state: PanelState = {
    connection: "connecting",
    engine: "idle",
    activeRun: null,
    lastSeq: 0,
    banner: null,
  };
  private feed: EventFeed | null = null;
  private confirmAbort = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly makeFeed: (handlers: FeedHandlers) => EventFeed,
    private readonly options: { runSpeed?: number; profile?: string } = {},
  ) {}

  async init(): Promise<void> {
    this.renderChrome();
    await this.refreshState();
    await this.refreshHistory();
    await this.refreshConfig();
    this.subscribe();
  }

  // -- wiring ---------------------------------------------------------------

  private renderChrome(): void {
    this.root.innerHTML = `
      <header class="topbar">
        <span class="title">sieve workstation</span>
        <span class="conn" data-conn>connecting</span>
        <span class="engine" data-engine>&mdash;</span>
      </header>
      <div class="banner hidden" data-banner></div>
      <section class="controls">
        <button class="start big" data-start="soil">soil sample<br><small>cyst extraction</small></button>
        <button class="start big" data-start="cyst">cyst sample<br><small>egg extraction</small></button>
        <button class="abort big hidden" data-abort>abort</button>
      </section>
      <section class="runview">
        <div class="progress"><div class="bar" data-progress style="width:0%"></div></div>
        <div class="stepline" data-stepline>idle</div>
        <div class="mimic" data-mimic></div>
      </section>
      <section class="history"><h3>history</h3><ul data-history></ul></section>
      <section class="config"><h3>config <span data-config-version></span></h3><pre data-config></pre></section>
    `;
    this.el("[data-start='soil']").addEventListener("click", () => void this.start("soil"));
    this.el("[data-start='cyst']").addEventListener("click", () => void this.start("cyst"));
    this.el("[data-abort]").addEventListener("click", () => void this.abort());
  }

  el<T extends HTMLElement = HTMLElement>(selector: string): T {
    const found = this.root.querySelector<T>(selector);
    if (!found) throw new Error(`panel element missing: ${selector}`);
    return found;
  }

  private subscribe(): void {
    this.feed = this.makeFeed({
      onEvent: (event) => this.onEvent(event),
      onGap: () => {
        // gap -> resync: the feed reconnects and a snapshot arrives first
        this.state.connection = "connecting";
        this.renderStatus();
        void this.feed?.connect();
      },
      onDisconnect: () => {
        this.state.connection = "lost";
        this.renderStatus();
      },
    });
    void this.feed.connect();
  }

  // -- event handling ---------------------------------------------------------

  onEvent(event: StreamEvent): void {
    switch (event.type) {
      case "snapshot":
        this.state.connection = "live";
        this.state.engine = event.engine;
        this.state.activeRun = event.active_run;
        renderMimic(this.el("[data-mimic]"), event.machine);
        break;
      case "telemetry": {
        this.state.lastSeq = event.seq;
        this.state.engine = "running";
        if (!this.state.activeRun || this.state.activeRun.run_id !== event.run_id) {
          this.state.activeRun = { run_id: event.run_id, script: "", seed: 0, status: "running" };
        }
        renderMimic(this.el("[data-mimic]"), event.machine);
        this.renderProgress(event.run_id, event.seq, event.step, event.action, event.phase);
        break;
      }
      case "run_terminal":
        this.state.engine = "idle";
        this.state.activeRun = null;
        this.state.lastSeq = 0;
        this.el("[data-stepline]").textContent = `${event.run_id}: ${event.status}`;
        void this.refreshHistory();
        break;
      case "replay_end":
        break;
    }
    this.renderStatus();
  }

  private renderProgress(runId: string, seq: number, step: number, action: string, phase: string): void {
    const script = this.state.activeRun?.script ?? "";
    const steps = SCRIPT_STEPS[script] ?? SCRIPT_STEPS.egg_extraction;
    const fraction = Math.min(100, (seq / (2 * steps)) * 100);
    (this.el("[data-progress]") as HTMLElement).style.width = `${fraction.toFixed(0)}%`;
    this.el("[data-stepline]").textContent = `${runId} · step ${step} ${action} (${phase}) · seq ${seq}`;
  }

  renderStatus(): void {
    this.el("[data-conn]").textContent = this.state.connection;
    this.el("[data-engine]").textContent =
      this.state.engine === "running" && this.state.activeRun
        ? `running ${this.state.activeRun.run_id}`
        : "idle";
    const running = this.state.engine === "running";
    this.el<HTMLButtonElement>("[data-start='soil']").disabled = running;
    this.el<HTMLButtonElement>("[data-start='cyst']").disabled = running;
    this.el("[data-abort]").classList.toggle("hidden", !running);
    const bannerEl = this.el("[data-banner]");
    bannerEl.classList.toggle("hidden", this.state.banner === null);
    bannerEl.textContent = this.state.banner ?? "";
  }

  // -- actions -----------------------------------------------------------------

  async start(inputType: InputType): Promise<void> {
    if (this.state.engine === "running") return; // button disabled; belt and braces
    this.state.banner = null;
    try {
      const started = await this.api.startRun(inputType, {
        speed: this.options.runSpeed ?? 1,
        ...(inputType === "cyst"
          ? { profile: "cyst_sample" }
          : this.options.profile
            ? { profile: this.options.profile }
            : {}),
      });
      this.state.engine = "running";
      this.state.activeRun = { run_id: started.run_id, script: started.script, seed: 0, status: "running" };
    } catch (error) {
      if (error instanceof ApiError && error.code === "engine_busy") {
        this.state.banner = "engine busy: one sample at a time";
      } else {
        this.state.banner = `start failed: ${(error as Error).message}`;
      }
    }
    this.renderStatus();
  }

  /** First tap arms the confirmation; second tap within the armed state sends. */
  async abort(): Promise<void> {
    const run = this.state.activeRun;
    if (!run) return;
    const button = this.el<HTMLButtonElement>("[data-abort]");
    if (!this.confirmAbort) {
      this.confirmAbort = true;
      button.textContent = "confirm abort?";
      button.classList.add("armed");
      return;
    }
    this.confirmAbort = false;
    button.textContent = "abort";
    button.classList.remove("armed");
    try {
      await this.api.abortRun(run.run_id);
    } catch (error) {
      // a race with completion is not an error for the operator
      if (!(error instanceof ApiError && (error.code === "not_running" || error.status === 409))) {
        this.state.banner = `abort failed: ${(error as Error).message}`;
        this.renderStatus();
      }
    }
  }

  disarmAbort(): void {
    this.confirmAbort = false;
  }

  // -- data refresh ---------------------------------------------------------------

  async refreshState(): Promise<void> {
    const state = await this.api.getState();
    this.state.engine = state.engine;
    this.state.activeRun = state.active_run;
    renderMimic(this.el("[data-mimic]"), state.machine);
    this.renderStatus();
  }

  async refreshHistory(): Promise<void> {
    const { runs } = await this.api.listRuns();
    const list = this.el("[data-history]");
    list.innerHTML = runs
      .slice(-8)
      .reverse()
      .map((run) => {
        const outputs = Object.entries(run.output_counts ?? {})
          .map(([k, v]) => `${v} ${k}`)
          .join(", ");
        return `<li data-run="${run.run_id}"><b>${run.run_id}</b> ${run.script} &mdash; ${run.status}${outputs ? ` (${outputs})` : ""}</li>`;
      })
      .join("");
  }

  async refreshConfig(): Promise<void> {
    const { version, config } = await this.api.getConfig();
    this.el("[data-config-version]").textContent = `v${version}`;
    this.el("[data-config]").textContent = JSON.stringify(config, null, 2);
  }

  close(): void {
    this.feed?.close();
  }
}
