"""Protocol executor: runs timed scripts against the simulated instrument.

One executor owns the machine, device bus, and particle inventory. Every step
consumes exactly its allocated duration on the virtual clock (motions first,
then a dwell remainder), emits enter/exit telemetry, and can be aborted
between clock ticks. Abort and faults funnel through the same safe-state
sequence: power off (drill, valves) strictly before any motion, then raise
the pad and retract the sprayer.

Script validation is symbolic execution: the script runs here against an
empty inventory and a scratch bus, so a script that validates clean can never
raise a runtime interlock violation (it took the identical transition path).
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .hal import DRILL_RELAY, DeviceBus, HalConfig
from .mechanism import (
    Compression,
    GRINDER_PARK_MM,
    InterlockViolation,
    Level,
    MachineError,
    MachineState,
    Station,
    grinder_set,
    gripper_transfer,
    initial_machine,
    machine_violations,
    rotate_stage,
    set_compression,
    set_drill,
    set_valve,
    sieve_station,
    sprayer_set,
    station_column,
)
from .particles import ParticleClass
from .profiles import SampleProfile, synthesize_sample
from .protocol import Action, ProtocolScript, load_config
from .sim.process import (
    Inventory,
    ProcessParams,
    collect_output,
    decant,
    mix_and_settle,
    rupture_on,
    wash_column,
)
from .sim.stream import Stream

__all__ = [
    "EngineError",
    "World",
    "TelemetryEvent",
    "RunRecord",
    "Executor",
    "new_world",
    "prepare_sample",
    "validate_script",
]

_ENGINE_DOMAIN = 0xE0
_SPRAYER_RELAY = 0
_NOZZLE_RELAY = 1

_STATION_BY_NAME = {name: idx for idx, name in enumerate(Station.NAMES)}
_LEVEL_BY_NAME = {name: idx for idx, name in enumerate(Level.NAMES)}


class EngineError(RuntimeError):
    pass


class _AbortRequested(Exception):
    pass


@dataclass
class World:
    """Everything one run mutates: machine, devices, particles."""

    config: dict
    bus: DeviceBus
    machine: MachineState
    inventory: Inventory
    params: ProcessParams
    seed: int = 0
    phase: int = 1  # 0 prep, 1 cyst, 2 egg, 3 manual


def new_world(
    config: dict,
    profile: SampleProfile | None,
    seed: int,
    input_type: str = "soil",
    params: ProcessParams | None = None,
) -> World:
    """Fresh machine + bus + inventory, with the sample synthesized from seed.

    For a soil sample the particles start in the bucket; a cyst sample has
    already been washed onto the #60 sieve by the operator.
    """
    bus = DeviceBus(HalConfig(**config.get("hal", {})))
    machine = initial_machine(input_type)
    if profile is not None:
        inventory = Inventory(synthesize_sample(profile, seed).batch)
        if input_type == "cyst":
            inventory.pour("bucket", "#60")
    else:
        inventory = Inventory()
    return World(config, bus, machine, inventory, params or ProcessParams(), seed)


def prepare_sample(world: World, charge_time: bool = False) -> None:
    """Mix and settle the bucket into suspension (pre-protocol preparation)."""
    stream = Stream.for_key(_ENGINE_DOMAIN, world.seed, 0, 0)
    mix_and_settle(world.inventory, world.params, stream)
    if charge_time:
        prep = world.config["timing"].get("prep", {})
        world.bus.advance(round((prep.get("mix_s", 15) + prep.get("settle_s", 15)) * 1000))


@dataclass(frozen=True)
class TelemetryEvent:
    run_id: str
    seq: int
    t_ms: int
    step_index: int
    action: str
    phase: str  # enter | exit | aborted | faulted
    machine: dict

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "seq": self.seq,
            "t_ms": self.t_ms,
            "step": self.step_index,
            "action": self.action,
            "phase": self.phase,
            "machine": self.machine,
        }


@dataclass
class RunRecord:
    run_id: str
    script_name: str
    seed: int
    start_ms: int
    end_ms: int = 0
    status: str = "running"  # running | completed | aborted | faulted
    fault_reason: str = ""
    fault_step: int = -1
    output_counts: dict = field(default_factory=dict)
    water_liters: float = 0.0
    expected_total_ms: int = 0
    events: list[TelemetryEvent] = field(default_factory=list)

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "script": self.script_name,
            "seed": self.seed,
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "duration_ms": self.duration_ms,
            "expected_total_ms": self.expected_total_ms,
            "status": self.status,
            "fault_reason": self.fault_reason,
            "fault_step": self.fault_step,
            "output_counts": self.output_counts,
            "water_liters": round(self.water_liters, 6),
            "events": [e.to_dict() for e in self.events],
        }


class Executor:
    """Single-owner executor; external control happens via ``request_abort``."""

    def __init__(
        self,
        world: World,
        on_event=None,
        speed: float = 0.0,
        tick_ms: int = 100,
        sleeper=time.sleep,
    ):
        self.world = world
        self.on_event = on_event
        self.speed = speed
        self.tick_ms = tick_ms
        self.sleeper = sleeper
        self._abort = threading.Event()
        self._record: RunRecord | None = None
        self._seq = 0

    def request_abort(self) -> None:
        self._abort.set()

    # -- main loop ----------------------------------------------------------

    def execute(self, script: ProtocolScript, run_id: str = "run", validate: bool = True) -> RunRecord:
        if validate:
            violations = validate_script(script, config=self.world.config, machine=self.world.machine)
            if violations:
                raise EngineError(f"script failed validation: {violations[0]}")
        w = self.world
        record = RunRecord(
            run_id=run_id,
            script_name=script.name,
            seed=w.seed,
            start_ms=w.bus.clock.now_ms,
            expected_total_ms=script.expected_total_ms,
        )
        self._record = record
        self._seq = 0
        handlers = {
            Action.DECANT: self._do_decant,
            Action.WASH: self._do_wash,
            Action.ROTATE: self._do_rotate,
            Action.COMPRESS: self._do_compress,
            Action.GRIPPER_TRANSFER: self._do_transfer,
            Action.GRINDER_LOWER: self._do_grinder_lower,
            Action.GRIND: self._do_grind,
            Action.GRINDER_RAISE: self._do_grinder_raise,
            Action.NOZZLE_SPRAY: self._do_nozzle_spray,
            Action.COLLECT_OUTPUT: self._do_collect,
            Action.DWELL: self._do_dwell,
        }
        try:
            for index, step in enumerate(script.steps):
                self._emit(record, index, step.action, "enter")
                if self._abort.is_set():
                    raise _AbortRequested()
                t_end = w.bus.clock.now_ms + step.duration_ms
                handlers[step.action](step, index)
                if w.bus.clock.now_ms > t_end:
                    raise EngineError(
                        f"step {index} ({step.action}) motions exceed its {step.duration_ms} ms allocation"
                    )
                self._advance_until(t_end)
                self._emit(record, index, step.action, "exit")
            record.status = "completed"
        except _AbortRequested:
            self._enter_safe_state()
            record.status = "aborted"
            index = min(index, len(script.steps) - 1)
            self._emit(record, index, script.steps[index].action, "aborted")
        except MachineError as err:
            # unreachable for scripts that passed validation; an engine bug otherwise
            self._enter_safe_state()
            record.status = "faulted"
            record.fault_reason = str(err)
            record.fault_step = index
            self._emit(record, index, script.steps[index].action, "faulted")
        if script.name == "cyst_extraction" and record.status == "completed":
            record.output_counts["cysts"] = w.inventory["#60"].class_count(ParticleClass.CYST)
        record.end_ms = w.bus.clock.now_ms
        record.water_liters = w.bus.flow.water_liters
        return record

    # -- plumbing -----------------------------------------------------------

    def _emit(self, record: RunRecord, step_index: int, action: str, phase: str) -> None:
        self._seq += 1
        snap = self.world.machine.snapshot()
        snap["grinder"]["rpm"] = self.world.bus.drill_rpm()
        snap["flow_lpm"] = self.world.bus.read_flow()
        event = TelemetryEvent(
            record.run_id, self._seq, self.world.bus.clock.now_ms, step_index, action, phase, snap
        )
        record.events.append(event)
        if self.on_event is not None:
            self.on_event(event)

    def _advance_until(self, t_end_ms: int) -> None:
        bus = self.world.bus
        while bus.clock.now_ms < t_end_ms:
            if self._abort.is_set():
                raise _AbortRequested()
            slice_ms = min(self.tick_ms, t_end_ms - bus.clock.now_ms)
            bus.advance(slice_ms)
            if self.speed > 0:
                self.sleeper(slice_ms / 1000.0 / self.speed)
        if self._abort.is_set():
            raise _AbortRequested()

    def _stream(self, step_index: int) -> Stream:
        return Stream.for_key(_ENGINE_DOMAIN, self.world.seed, self.world.phase, step_index + 1)

    def _motion(self, channel: str, steps: int) -> None:
        if steps:
            self.world.bus.step(channel, steps)

    def _grind_column(self) -> list[str]:
        return station_column(self.world.machine, Station.GRIND)

    # -- step handlers -------------------------------------------------------

    def _do_decant(self, step, index) -> None:
        w = self.world
        column = station_column(w.machine, Station.LOAD)
        if not column:
            raise InterlockViolation("decanting with no sieve at the load station")
        decant(w.inventory, tuple(column))

    def _do_rotate(self, step, index) -> None:
        w = self.world
        _, current = sieve_station(w.machine, step.params["sieve"])
        target = _STATION_BY_NAME[step.params["station"]]
        quarter_steps = w.config["motion"]["steps_per_quarter_turn"]
        for _ in range((target - current) % 4):
            w.machine = rotate_stage(w.machine, +1)
            self._motion("stage_rotation", quarter_steps)

    def _do_compress(self, step, index) -> None:
        w = self.world
        target = Compression(step.params["target"])
        before = w.machine.stage.level_heights_mm
        w.machine = set_compression(w.machine, target)
        after = w.machine.stage.level_heights_mm
        travel_mm = abs(after[Level.BOTTOM] - before[Level.BOTTOM])
        steps = round(travel_mm * w.config["motion"]["lift_steps_per_mm"])
        self._motion("stage_lift", steps if after[Level.BOTTOM] >= before[Level.BOTTOM] else -steps)

    def _do_wash(self, step, index) -> None:
        w = self.world
        sieve = step.params["sieve"]
        column = station_column(w.machine, Station.WASH)
        if not column or column[0] != sieve:
            raise InterlockViolation(f"sprayer cannot cover {sieve}: not at the top of the wash station")
        arm_steps = w.config["motion"]["sprayer_arm_steps"]
        arm_ms = round(arm_steps * w.bus.config.step_period_ms)
        t_end = w.bus.clock.now_ms + step.duration_ms
        w.machine = sprayer_set(w.machine, sieve, False)
        self._motion("sprayer_arm", arm_steps)
        w.machine = set_valve(w.machine, "sprayer", True)
        w.bus.set_relay(_SPRAYER_RELAY, True)
        w.machine = sprayer_set(w.machine, sieve, True)
        wash_column(w.inventory, tuple(column), step.params["duration_s"], w.params, self._stream(index))
        self._advance_until(t_end - arm_ms)
        w.machine = sprayer_set(w.machine, sieve, False)
        w.machine = set_valve(w.machine, "sprayer", False)
        w.bus.set_relay(_SPRAYER_RELAY, False)
        w.machine = sprayer_set(w.machine, None, False)
        self._motion("sprayer_arm", -arm_steps)

    def _do_transfer(self, step, index) -> None:
        w = self.world
        src = sieve_station(w.machine, step.params["sieve"])
        _, dst_station = sieve_station(w.machine, step.params["above"])
        dst = (_LEVEL_BY_NAME[step.params["to_level"]], dst_station)
        arm_steps = w.config["motion"]["gripper_arm_steps"]
        self._motion("gripper_arm", arm_steps)
        w.bus.set_servo(90.0)  # close fingers
        w.machine = gripper_transfer(w.machine, src, dst)
        w.bus.set_servo(0.0)  # release
        self._motion("gripper_arm", -arm_steps)

    def _quill_to(self, target_mm: float) -> None:
        w = self.world
        travel = target_mm - w.machine.grinder.pad_height_mm
        steps = round(travel * w.config["motion"]["quill_steps_per_mm"])
        w.machine = grinder_set(w.machine, pad_height_mm=target_mm)
        self._motion("grinder_quill", steps)

    def _do_grinder_lower(self, step, index) -> None:
        self._quill_to(float(step.params["to_mm"]))

    def _do_grind(self, step, index) -> None:
        w = self.world
        if not w.machine.drill_relay:
            w.machine = set_drill(w.machine, True)
            w.bus.set_relay(DRILL_RELAY, True)
        if w.machine.grinder.pad_height_mm > 0:
            self._quill_to(0.0)
        column = self._grind_column()
        if not column:
            raise InterlockViolation("grinding with no sieve under the pad")
        below = column[1] if len(column) > 1 else "drain"
        rupture_on(w.inventory, column[0], below, w.params, self._stream(index))

    def _do_grinder_raise(self, step, index) -> None:
        w = self.world
        if step.params.get("stop_drill") and w.machine.drill_relay:
            # power off strictly before motion: never move a spinning pad
            w.machine = set_drill(w.machine, False)
            w.bus.set_relay(DRILL_RELAY, False)
        target = step.params["to_mm"]
        self._quill_to(GRINDER_PARK_MM if target == "park" else float(target))

    def _do_nozzle_spray(self, step, index) -> None:
        w = self.world
        t_end = w.bus.clock.now_ms + step.duration_ms
        w.machine = set_valve(w.machine, "nozzle", True)
        w.bus.set_relay(_NOZZLE_RELAY, True)
        column = self._grind_column()
        if column:
            wash_column(w.inventory, tuple(column), step.params["duration_s"], w.params, self._stream(index))
        self._advance_until(t_end)
        w.machine = set_valve(w.machine, "nozzle", False)
        w.bus.set_relay(_NOZZLE_RELAY, False)

    def _do_collect(self, step, index) -> None:
        w = self.world
        if not w.machine.grinder.raised:
            raise InterlockViolation("collecting output under a lowered grinding pad")
        if w.machine.stage.compression is not Compression.UNCOMPRESSED:
            raise InterlockViolation("collecting output from a compressed stack")
        sieve = step.params["sieve"]
        sieve_station(w.machine, sieve)
        eggs = collect_output(w.inventory, sieve)
        assert self._record is not None
        self._record.output_counts["eggs"] = eggs

    def _do_dwell(self, step, index) -> None:
        pass  # duration is consumed by the shared advance

    # -- safety ---------------------------------------------------------------

    def _enter_safe_state(self) -> None:
        w = self.world
        if w.machine.sprayer.bar_spinning:
            w.machine = sprayer_set(w.machine, w.machine.sprayer.engaged_over, False)
        if w.machine.drill_relay:
            w.machine = set_drill(w.machine, False)
            w.bus.set_relay(DRILL_RELAY, False)
        w.machine = set_valve(w.machine, "sprayer", False)
        w.machine = set_valve(w.machine, "nozzle", False)
        w.bus.set_relay(_SPRAYER_RELAY, False)
        w.bus.set_relay(_NOZZLE_RELAY, False)
        if not w.machine.grinder.raised:
            self._quill_to(GRINDER_PARK_MM)
        if w.machine.sprayer.engaged_over is not None:
            w.machine = sprayer_set(w.machine, None, False)
            self._motion("sprayer_arm", -w.config["motion"]["sprayer_arm_steps"])
        violations = machine_violations(w.machine)
        if violations:  # pragma: no cover - defensive
            raise AssertionError(f"safe state left violations: {violations}")


def validate_script(
    script: ProtocolScript,
    config: dict | None = None,
    machine: MachineState | None = None,
) -> list[str]:
    """Symbolically execute a script; returns [] or the violations found.

    Runs the real executor against an empty inventory and a scratch device
    bus starting from the given (or factory) machine state, so validation and
    execution share one transition path.
    """
    static = script.static_violations()
    if static:
        return static
    config = config or load_config()
    world = new_world(config, None, seed=0, input_type=script.input_type)
    if machine is not None:
        world.machine = machine
    executor = Executor(world)
    try:
        record = executor.execute(script, run_id="validate", validate=False)
    except EngineError as err:
        return [str(err)]
    if record.status == "faulted":
        step = script.steps[record.fault_step]
        return [f"step {record.fault_step} ({step.action}): {record.fault_reason}"]
    return []
