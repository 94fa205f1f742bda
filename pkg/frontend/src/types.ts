/**
 * Types mirroring the control API contract (see API.md at the repo root).
 * The panel never invents state: everything rendered derives from these
 * payloads.
 */

export type Compression = "uncompressed" | "partial" | "full";

export interface MachineSnapshot {
  stage: {
    rotation_index: number;
    compression: Compression;
    /** [level][station] -> sieve id or null; levels top/middle/bottom */
    slots: (string | null)[][];
    level_heights_mm: number[];
  };
  gripper: {
    wrist_deg: number;
    fingers: "open" | "closed";
    holding: string | null;
    position: string;
  };
  grinder: {
    pad_height_mm: number;
    spinning: boolean;
    rpm: number;
  };
  sprayer: {
    engaged_over: string | null;
    bar_spinning: boolean;
  };
  valves: { sprayer: boolean; nozzle: boolean };
  drill_relay: boolean;
  flow_lpm?: number;
}

export interface RunSummary {
  run_id: string;
  script: string;
  seed: number;
  status: string;
  events_seen?: number;
  output_counts?: Record<string, number>;
  duration_ms?: number;
}

export interface TelemetryEvent {
  type: "telemetry";
  run_id: string;
  seq: number;
  t_ms: number;
  step: number;
  action: string;
  phase: "enter" | "exit" | "aborted" | "faulted";
  machine: MachineSnapshot;
}

export interface SnapshotEvent {
  type: "snapshot";
  engine: "idle" | "running";
  active_run: RunSummary | null;
  machine: MachineSnapshot;
}

export interface RunTerminalEvent {
  type: "run_terminal";
  run_id: string;
  status: string;
}

export interface ReplayEndEvent {
  type: "replay_end";
  run_id: string;
}

export type StreamEvent = TelemetryEvent | SnapshotEvent | RunTerminalEvent | ReplayEndEvent;

export type InputType = "soil" | "cyst";

/** Steps per shipped script; drives the seq-based progress bar. */
export const SCRIPT_STEPS: Record<string, number> = {
  cyst_extraction: 6,
  egg_extraction: 18,
};
