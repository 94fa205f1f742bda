/**
 * Mimic diagram: an HMI-style schematic of the live machine state.
 * Renders only what the snapshot says; no client-side protocol logic.
 * A malformed snapshot leaves the last good drawing in place and raises a
 * stale-data badge.
 */

import type { MachineSnapshot } from "./types.js";

const LEVELS = ["top", "middle", "bottom"];
const STATIONS = ["load", "wash", "grind", "spare"];

export function isValidSnapshot(snap: unknown): snap is MachineSnapshot {
  if (typeof snap !== "object" || snap === null) return false;
  const s = snap as MachineSnapshot;
  return (
    !!s.stage &&
    Array.isArray(s.stage.slots) &&
    s.stage.slots.length === 3 &&
    s.stage.slots.every((level) => Array.isArray(level) && level.length === 4) &&
    typeof s.stage.rotation_index === "number" &&
    typeof s.stage.compression === "string" &&
    !!s.grinder &&
    typeof s.grinder.pad_height_mm === "number" &&
    !!s.valves &&
    typeof s.valves.sprayer === "boolean" &&
    typeof s.valves.nozzle === "boolean"
  );
}

function badge(label: string, on: boolean, extra = ""): string {
  return `<span class="badge ${on ? "on" : "off"}" data-badge="${label}">${label}${extra}</span>`;
}

/**
 * Draw the snapshot into the container. Returns true when drawn, false when
 * the snapshot was malformed (the previous drawing is retained and the
 * container gets a `stale` class).
 */
export function renderMimic(root: HTMLElement, snap: unknown): boolean {
  if (!isValidSnapshot(snap)) {
    root.classList.add("stale");
    root.setAttribute("data-stale", "1");
    return false;
  }
  root.classList.remove("stale");
  root.removeAttribute("data-stale");

  const grinderDown = snap.grinder.pad_height_mm < 76.2;
  const rows = LEVELS.map((levelName, level) => {
    const cells = STATIONS.map((stationName, station) => {
      const sieve = snap.stage.slots[level][station];
      return `<td class="slot ${sieve ? "held" : "empty"}" data-slot="${levelName}:${stationName}">${sieve ?? "&middot;"}</td>`;
    }).join("");
    return `<tr><th>${levelName}</th>${cells}</tr>`;
  }).join("");

  root.innerHTML = `
    <div class="mimic-stage compression-${snap.stage.compression}" data-compression="${snap.stage.compression}">
      <table class="stage-grid">
        <thead><tr><th></th>${STATIONS.map((s) => `<th>${s}</th>`).join("")}</tr></thead>
        <tbody>${rows}</tbody>
      </table>
      <div class="stage-meta">rotation ${snap.stage.rotation_index} &middot; ${snap.stage.compression}</div>
    </div>
    <div class="mimic-devices">
      <div class="grinder ${grinderDown ? "down" : "up"} ${snap.grinder.spinning ? "spinning" : ""}"
           data-grinder="${grinderDown ? "down" : "up"}" data-spinning="${snap.grinder.spinning}">
        pad ${snap.grinder.pad_height_mm.toFixed(1)} mm
        <span class="rpm" data-rpm>${Math.round(snap.grinder.rpm)} rpm</span>
      </div>
      <div class="indicators">
        ${badge("sprayer valve", snap.valves.sprayer)}
        ${badge("nozzle valve", snap.valves.nozzle)}
        ${badge("drill", snap.drill_relay)}
        ${badge("spray bar", snap.sprayer.bar_spinning)}
        ${badge("flow", (snap.flow_lpm ?? 0) > 0, ` ${(snap.flow_lpm ?? 0).toFixed(1)} L/min`)}
      </div>
      <div class="gripper" data-gripper="${snap.gripper.position}">
        gripper ${snap.gripper.position} &middot; ${snap.gripper.fingers}${snap.gripper.holding ? ` &middot; holding ${snap.gripper.holding}` : ""}
      </div>
    </div>
  `;
  return true;
}
