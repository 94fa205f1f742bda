"""Kinematic state machines for stage, gripper, sprayer, and grinder.

The physical instrument enforces most of these rules by geometry (a pad
inside a sieve simply cannot rotate past the gripper post). Here they are
explicit interlocks: every transition is a pure function
``(MachineState, command) -> MachineState`` that raises
:class:`InterlockViolation` and leaves the input untouched when the motion
would be geometrically impossible or unsafe. A rejected command therefore
never changes state (command atomicity).

Slots are indexed by fixed station (0 load/decant, 1 washer, 2 grinder,
3 spare); rotating the stage permutes slot contents across stations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

__all__ = [
    "MachineError",
    "InterlockViolation",
    "SlotEmpty",
    "SlotOccupied",
    "Compression",
    "Level",
    "Station",
    "StageState",
    "GripperState",
    "GrinderState",
    "SprayerState",
    "MachineState",
    "LEVEL_HEIGHTS_MM",
    "GRINDER_PARK_MM",
    "GRINDER_CLEAR_MM",
    "SIEVE_RIM_MM",
    "initial_machine",
    "rotate_stage",
    "set_compression",
    "gripper_transfer",
    "grinder_set",
    "set_drill",
    "sprayer_set",
    "set_valve",
    "machine_violations",
    "sieve_station",
    "station_column",
]


class MachineError(RuntimeError):
    pass


class InterlockViolation(MachineError):
    """A commanded motion the physical geometry forbids; signals a protocol bug."""


class SlotEmpty(MachineError):
    pass


class SlotOccupied(MachineError):
    pass


class Compression(str, Enum):
    UNCOMPRESSED = "uncompressed"
    PARTIAL = "partial"
    FULL = "full"


class Level:
    TOP, MIDDLE, BOTTOM = 0, 1, 2
    NAMES = ("top", "middle", "bottom")


class Station:
    LOAD, WASH, GRIND, SPARE = 0, 1, 2, 3
    NAMES = ("load", "wash", "grind", "spare")


_INCH = 25.4
# Working plane of each level (top, middle, bottom), per compression state.
LEVEL_HEIGHTS_MM: dict[Compression, tuple[float, float, float]] = {
    Compression.UNCOMPRESSED: (11.5 * _INCH, 7.0 * _INCH, 2.5 * _INCH),
    Compression.PARTIAL: (11.5 * _INCH, 7.0 * _INCH, 7.0 * _INCH),
    Compression.FULL: (11.5 * _INCH, 11.5 * _INCH, 11.5 * _INCH),
}

GRINDER_PARK_MM = 6.0 * _INCH
GRINDER_CLEAR_MM = 3.0 * _INCH  # pad fully clear of all sieves at or above this
SIEVE_RIM_MM = 2.0 * _INCH  # below this the pad is inside the top sieve body

Slots = tuple[tuple[str | None, ...], ...]  # [level][station]


@dataclass(frozen=True)
class StageState:
    rotation_index: int = 0
    compression: Compression = Compression.UNCOMPRESSED
    slots: Slots = ((None,) * 4, (None,) * 4, (None,) * 4)

    @property
    def level_heights_mm(self) -> tuple[float, float, float]:
        return LEVEL_HEIGHTS_MM[self.compression]


@dataclass(frozen=True)
class GripperState:
    wrist_deg: float = 0.0
    fingers: str = "open"  # open | closed
    holding: str | None = None
    position: str = "parked"  # parked | at:<level>:<station>


@dataclass(frozen=True)
class GrinderState:
    pad_height_mm: float = GRINDER_PARK_MM  # above the top-of-column mesh
    spinning: bool = False
    rpm: float = 0.0

    @property
    def raised(self) -> bool:
        return self.pad_height_mm >= GRINDER_CLEAR_MM


@dataclass(frozen=True)
class SprayerState:
    engaged_over: str | None = None
    bar_spinning: bool = False


@dataclass(frozen=True)
class MachineState:
    stage: StageState = field(default_factory=StageState)
    gripper: GripperState = field(default_factory=GripperState)
    grinder: GrinderState = field(default_factory=GrinderState)
    sprayer: SprayerState = field(default_factory=SprayerState)
    sprayer_valve: bool = False
    nozzle_valve: bool = False
    drill_relay: bool = False

    def snapshot(self) -> dict:
        return {
            "stage": {
                "rotation_index": self.stage.rotation_index,
                "compression": self.stage.compression.value,
                "slots": [list(level) for level in self.stage.slots],
                "level_heights_mm": list(self.stage.level_heights_mm),
            },
            "gripper": {
                "wrist_deg": self.gripper.wrist_deg,
                "fingers": self.gripper.fingers,
                "holding": self.gripper.holding,
                "position": self.gripper.position,
            },
            "grinder": {
                "pad_height_mm": self.grinder.pad_height_mm,
                "spinning": self.grinder.spinning,
                "rpm": self.grinder.rpm,
            },
            "sprayer": {
                "engaged_over": self.sprayer.engaged_over,
                "bar_spinning": self.sprayer.bar_spinning,
            },
            "valves": {"sprayer": self.sprayer_valve, "nozzle": self.nozzle_valve},
            "drill_relay": self.drill_relay,
        }


def initial_machine(input_type: str = "soil") -> MachineState:
    """Factory layout: the decant pair at the load station, fines stack nearby.

    For a cyst-sample run the operator has already seated the #60 sieve above
    the #200/#500 pair.
    """
    empty: list[list[str | None]] = [[None] * 4 for _ in range(3)]
    if input_type == "soil":
        empty[Level.TOP][Station.LOAD] = "#20"
        empty[Level.MIDDLE][Station.LOAD] = "#60"
        empty[Level.MIDDLE][Station.WASH] = "#200"
        empty[Level.BOTTOM][Station.WASH] = "#500"
    elif input_type == "cyst":
        empty[Level.TOP][Station.LOAD] = "#20"
        empty[Level.TOP][Station.WASH] = "#60"
        empty[Level.MIDDLE][Station.WASH] = "#200"
        empty[Level.BOTTOM][Station.WASH] = "#500"
    else:
        raise MachineError(f"unknown input type {input_type!r}")
    slots = tuple(tuple(level) for level in empty)
    return MachineState(stage=StageState(slots=slots))


def sieve_station(state: MachineState, sieve_id: str) -> tuple[int, int]:
    """(level, station) of a sieve, or SlotEmpty if it is not in the stage."""
    for level in range(3):
        for station in range(4):
            if state.stage.slots[level][station] == sieve_id:
                return level, station
    raise SlotEmpty(f"sieve {sieve_id} is not in any slot")


def station_column(state: MachineState, station: int) -> list[str]:
    """Sieve ids at a station, top level first, skipping empty levels."""
    return [sid for level in range(3) if (sid := state.stage.slots[level][station]) is not None]


def _require(condition: bool, reason: str) -> None:
    if not condition:
        raise InterlockViolation(reason)


def rotate_stage(state: MachineState, quarter_turns: int) -> MachineState:
    """Rotate the carousel; slot contents move with the stage."""
    _require(
        state.stage.compression is Compression.UNCOMPRESSED,
        "rotation while compressed: the stacked column locks the central post",
    )
    _require(state.grinder.raised, "rotation with the grinding pad inside the sieve envelope")
    _require(state.gripper.position == "parked", "rotation while the gripper is engaged with a slot")
    _require(state.sprayer.engaged_over is None, "rotation while the sprayer covers a sieve")
    q = int(quarter_turns) % 4
    slots = tuple(
        tuple(level[(station - q) % 4] for station in range(4)) for level in state.stage.slots
    )
    stage = replace(
        state.stage,
        rotation_index=(state.stage.rotation_index + quarter_turns) % 4,
        slots=slots,
    )
    return replace(state, stage=stage)


def set_compression(state: MachineState, target: Compression) -> MachineState:
    _require(state.grinder.raised, "compressing or releasing the stage under a lowered grinder")
    _require(state.gripper.position == "parked", "stage lift while the gripper is inside the stage")
    return replace(state, stage=replace(state.stage, compression=target))


def gripper_transfer(
    state: MachineState, src: tuple[int, int], dst: tuple[int, int]
) -> MachineState:
    """Grab the sieve at src and seat it at dst; gripper ends parked and open."""
    _require(
        state.stage.compression is Compression.UNCOMPRESSED,
        "gripper cannot reach slots while the stage is compressed",
    )
    src_level, src_station = src
    dst_level, dst_station = dst
    sieve = state.stage.slots[src_level][src_station]
    if sieve is None:
        raise SlotEmpty(f"no sieve at level {src_level}, station {src_station}")
    if state.stage.slots[dst_level][dst_station] is not None:
        raise SlotOccupied(f"slot at level {dst_level}, station {dst_station} is occupied")
    rows = [list(level) for level in state.stage.slots]
    rows[src_level][src_station] = None
    rows[dst_level][dst_station] = sieve
    stage = replace(state.stage, slots=tuple(tuple(r) for r in rows))
    gripper = GripperState()  # parked, open, empty
    return replace(state, stage=stage, gripper=gripper)


def grinder_set(
    state: MachineState,
    pad_height_mm: float | None = None,
    spinning: bool | None = None,
) -> MachineState:
    grinder = state.grinder
    if spinning is not None:
        state = set_drill(state, spinning)
        grinder = state.grinder
    if pad_height_mm is not None:
        if pad_height_mm < 0:
            raise InterlockViolation("pad cannot be driven below the mesh plane")
        if pad_height_mm < SIEVE_RIM_MM:
            _require(
                state.stage.compression is Compression.FULL,
                "pad cannot reach an unstacked sieve column",
            )
            column = station_column(state, Station.GRIND)
            _require(bool(column), "pad lowered onto an empty grind station")
        grinder = replace(grinder, pad_height_mm=float(pad_height_mm))
    return replace(state, grinder=grinder)


def set_drill(state: MachineState, on: bool) -> MachineState:
    """Drill-press relay; rpm follows the relay (ramped by the device bus)."""
    grinder = replace(state.grinder, spinning=on, rpm=state.grinder.rpm if on else 0.0)
    return replace(state, drill_relay=on, grinder=grinder)


def sprayer_set(
    state: MachineState, engaged_over: str | None, bar_spinning: bool
) -> MachineState:
    if engaged_over is not None:
        sieve_station(state, engaged_over)  # must exist somewhere in the stage
    if bar_spinning:
        _require(engaged_over is not None, "spray bar spinning while not over a sieve")
        _require(state.sprayer_valve, "spray bar cannot spin without water pressure")
    return replace(state, sprayer=SprayerState(engaged_over, bar_spinning))


def set_valve(state: MachineState, valve: str, open_: bool) -> MachineState:
    if valve == "sprayer":
        if not open_ and state.sprayer.bar_spinning:
            raise InterlockViolation("closing the sprayer valve while the bar is spinning")
        return replace(state, sprayer_valve=open_)
    if valve == "nozzle":
        return replace(state, nozzle_valve=open_)
    raise MachineError(f"unknown valve {valve!r}")


def machine_violations(state: MachineState) -> list[str]:
    """Invariant audit; an empty list means the state is sound."""
    out: list[str] = []
    if state.gripper.holding is not None and state.gripper.fingers != "closed":
        out.append("gripper holding a sieve with open fingers")
    if state.sprayer.bar_spinning and not state.sprayer_valve:
        out.append("spray bar spinning with its valve closed")
    if state.grinder.rpm > 0 and not state.drill_relay:
        out.append("pad rpm non-zero with the drill relay off")
    if state.grinder.spinning != state.drill_relay:
        out.append("grinder spin flag out of sync with the drill relay")
    if state.grinder.pad_height_mm < 0:
        out.append("pad below the mesh plane")
    if state.grinder.pad_height_mm < SIEVE_RIM_MM:
        if state.stage.compression is not Compression.FULL:
            out.append("pad inside the sieve envelope without a stacked column")
        elif not station_column(state, Station.GRIND):
            out.append("pad inside an empty grind station")
    if state.stage.compression is not Compression.UNCOMPRESSED and state.gripper.position != "parked":
        out.append("gripper inside a compressed stage")
    if state.stage.level_heights_mm != LEVEL_HEIGHTS_MM[state.stage.compression]:
        out.append("level heights drifted from the compression state")
    seen: set[str] = set()
    for level in state.stage.slots:
        for sid in level:
            if sid is not None:
                if sid in seen:
                    out.append(f"sieve {sid} present in two slots")
                seen.add(sid)
    if state.gripper.holding in seen:
        out.append("sieve simultaneously held and slotted")
    return out
