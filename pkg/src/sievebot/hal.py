"""Device-level abstraction: steppers, servo, relays, flow sensor, virtual clock.

Only simulated implementations ship. All timed behavior reads the virtual
clock; nothing touches wall time, so identical command sequences produce
bit-identical device states and trace logs. The trace is one tab-separated
line per command or sensor transition (``now_ms  device  command  value``)
for golden-trace diffing.

Water is accounted in integer units of (ms x mL/min) so that two advances of
a and b milliseconds leave exactly the same ledger as one advance of a+b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "DeviceError",
    "HalConfig",
    "VirtualClock",
    "StepperChannel",
    "ServoChannel",
    "RelayChannel",
    "FlowSensor",
    "DeviceBus",
    "STEPPER_NAMES",
    "RELAY_NAMES",
]

STEPPER_NAMES = (
    "stage_rotation",
    "stage_lift",
    "gripper_arm",
    "gripper_lift",
    "sprayer_arm",
    "grinder_quill",
)

# Relay 2 is the dedicated drill-press switch; 0 and 1 drive solenoid valves.
RELAY_NAMES = (
    "sprayer_valve",
    "nozzle_valve",
    "drill_press",
    "spare3",
    "spare4",
    "spare5",
    "spare6",
    "spare7",
)
VALVE_RELAYS = (0, 1)
DRILL_RELAY = 2

_WATER_UNITS_PER_LITER = 60_000_000  # ms x mL/min per liter


class DeviceError(RuntimeError):
    """Unknown channel, out-of-range relay index, or invalid time step."""


@dataclass(frozen=True)
class HalConfig:
    step_period_ms: float = 1.0
    flow_lpm: float = 4.0
    pulses_per_liter: int = 450
    drill_rpm: float = 500.0
    drill_ramp_ms: int = 1000

    def __post_init__(self) -> None:
        if not 0.3 <= self.flow_lpm <= 10.0:
            raise DeviceError(f"flow rate {self.flow_lpm} outside sensor range 0.3-10 L/min")
        if self.step_period_ms <= 0 or self.drill_ramp_ms <= 0:
            raise DeviceError("step period and drill ramp must be positive")


@dataclass
class VirtualClock:
    """Monotonic simulated milliseconds; speed pacing is the executor's job."""

    now_ms: int = 0

    def advance(self, ms: int) -> int:
        if ms < 0:
            raise DeviceError(f"cannot advance clock by {ms} ms")
        self.now_ms += int(ms)
        return self.now_ms


@dataclass
class StepperChannel:
    name: str
    steps_per_rev: int = 200
    gear_ratio: float = 1.0
    position_steps: int = 0

    @property
    def angle_deg(self) -> float:
        return self.position_steps * (360.0 / self.steps_per_rev) / self.gear_ratio


@dataclass
class ServoChannel:
    name: str
    angle_deg: float = 0.0


@dataclass
class RelayChannel:
    index: int
    name: str
    on: bool = False


@dataclass
class FlowSensor:
    pulses_per_liter: int
    rate_lpm: float = 0.0
    water_units: int = 0  # integer ms x mL/min

    @property
    def water_liters(self) -> float:
        return self.water_units / _WATER_UNITS_PER_LITER

    @property
    def pulse_count(self) -> int:
        return self.water_units * self.pulses_per_liter // _WATER_UNITS_PER_LITER


@dataclass
class DeviceBus:
    """One bus for the whole instrument, owned by a single executor."""

    config: HalConfig = field(default_factory=HalConfig)
    clock: VirtualClock = field(default_factory=VirtualClock)
    steppers: dict[str, StepperChannel] = field(default_factory=dict)
    servo: ServoChannel = field(default_factory=lambda: ServoChannel("gripper_fingers"))
    relays: list[RelayChannel] = field(default_factory=list)
    flow: FlowSensor = field(init=False)
    trace: list[str] = field(default_factory=list)
    _drill_on_since_ms: int | None = None

    def __post_init__(self) -> None:
        if not self.steppers:
            self.steppers = {name: StepperChannel(name) for name in STEPPER_NAMES}
            self.steppers["stage_rotation"].gear_ratio = 2.0
        if not self.relays:
            self.relays = [RelayChannel(i, name) for i, name in enumerate(RELAY_NAMES)]
        self.flow = FlowSensor(self.config.pulses_per_liter)

    # -- commands ---------------------------------------------------------

    def step(self, channel: str, steps: int) -> int:
        """Move a stepper; simulated time advances with the motion."""
        if channel not in self.steppers:
            raise DeviceError(f"unknown stepper channel {channel!r}")
        stepper = self.steppers[channel]
        self.advance(round(abs(steps) * self.config.step_period_ms))
        stepper.position_steps += int(steps)
        self._emit(channel, "step", f"{int(steps):+d}->{stepper.position_steps}")
        return stepper.position_steps

    def set_servo(self, angle_deg: float) -> None:
        self.servo.angle_deg = float(angle_deg)
        self._emit(self.servo.name, "servo", f"{angle_deg:g}")

    def set_relay(self, index: int, on: bool) -> bool:
        if not 0 <= index < len(self.relays):
            raise DeviceError(f"relay index {index} out of range")
        relay = self.relays[index]
        if relay.on != on:
            relay.on = on
            self._emit(f"relay{index}:{relay.name}", "set", "on" if on else "off")
            if index in VALVE_RELAYS:
                self._update_flow()
            if index == DRILL_RELAY:
                self._drill_on_since_ms = self.clock.now_ms if on else None
                self._emit("drill", "rpm_target", f"{self.config.drill_rpm:g}" if on else "0")
        return relay.on

    def advance(self, ms: int) -> int:
        """Advance simulated time, integrating open-valve water flow."""
        if ms < 0:
            raise DeviceError(f"cannot advance by {ms} ms")
        if self.flow.rate_lpm > 0.0:
            self.flow.water_units += int(ms) * round(self.flow.rate_lpm * 1000)
        return self.clock.advance(ms)

    # -- readbacks ---------------------------------------------------------

    def read_flow(self) -> float:
        return self.flow.rate_lpm

    def valve_open(self) -> bool:
        return any(self.relays[i].on for i in VALVE_RELAYS)

    def drill_rpm(self) -> float:
        """Current rpm: linear ramp to the setpoint, instant stop on power-off."""
        if self._drill_on_since_ms is None:
            return 0.0
        elapsed = self.clock.now_ms - self._drill_on_since_ms
        frac = min(1.0, elapsed / self.config.drill_ramp_ms)
        return self.config.drill_rpm * frac

    def snapshot(self) -> dict:
        return {
            "now_ms": self.clock.now_ms,
            "steppers": {name: ch.position_steps for name, ch in self.steppers.items()},
            "relays": {ch.name: ch.on for ch in self.relays},
            "flow_lpm": self.flow.rate_lpm,
            "water_liters": round(self.flow.water_liters, 6),
            "pulse_count": self.flow.pulse_count,
            "drill_rpm": self.drill_rpm(),
        }

    # -- internals ---------------------------------------------------------

    def _update_flow(self) -> None:
        rate = self.config.flow_lpm if self.valve_open() else 0.0
        if rate != self.flow.rate_lpm:
            self.flow.rate_lpm = rate
            self._emit("flow", "rate_lpm", f"{rate:g}")

    def _emit(self, device: str, command: str, value: str) -> None:
        self.trace.append(f"{self.clock.now_ms}\t{device}\t{command}\t{value}")
