"""Timed protocol scripts: step vocabulary, builders, and serialization.

Scripts are plain data (shipped as JSON files, editable without a rebuild).
The two shipped extraction protocols are compiled from the timing section of
the engine config; with the default allocation the cyst script totals exactly
140 s and the egg script exactly 98 s, of which the grind and spray segments
sum to 60 s. Validation of a script against the machine interlocks lives in
:mod:`sievebot.engine` (it symbolically executes the script).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

__all__ = [
    "Action",
    "ProtocolStep",
    "ProtocolScript",
    "ConfigError",
    "load_config",
    "config_schema",
    "build_cyst_protocol",
    "build_egg_protocol",
    "build_manual_protocol",
    "build_protocol",
    "load_script",
]


class ConfigError(ValueError):
    """Missing or inconsistent timing/config entries."""


class Action:
    DECANT = "decant"
    WASH = "wash"
    ROTATE = "rotate"
    COMPRESS = "compress"
    GRIPPER_TRANSFER = "gripper_transfer"
    GRINDER_LOWER = "grinder_lower"
    GRIND = "grind"
    GRINDER_RAISE = "grinder_raise"
    NOZZLE_SPRAY = "nozzle_spray"
    COLLECT_OUTPUT = "collect_output"
    DWELL = "dwell"

    ALL = (
        DECANT,
        WASH,
        ROTATE,
        COMPRESS,
        GRIPPER_TRANSFER,
        GRINDER_LOWER,
        GRIND,
        GRINDER_RAISE,
        NOZZLE_SPRAY,
        COLLECT_OUTPUT,
        DWELL,
    )


@dataclass(frozen=True)
class ProtocolStep:
    action: str
    params: dict[str, Any] = field(default_factory=dict)
    duration_ms: int = 0

    def __post_init__(self) -> None:
        if self.action not in Action.ALL:
            raise ConfigError(f"unknown action {self.action!r}")
        if self.duration_ms < 0:
            raise ConfigError(f"negative duration for {self.action}")

    def to_dict(self) -> dict:
        return {"action": self.action, "params": self.params, "duration_ms": self.duration_ms}

    @classmethod
    def from_dict(cls, doc: dict) -> "ProtocolStep":
        return cls(doc["action"], dict(doc.get("params", {})), int(doc["duration_ms"]))


@dataclass(frozen=True)
class ProtocolScript:
    name: str  # cyst_extraction | egg_extraction | manual_bucket
    steps: tuple[ProtocolStep, ...]

    @property
    def expected_total_ms(self) -> int:
        return sum(step.duration_ms for step in self.steps)

    @property
    def input_type(self) -> str:
        return "cyst" if self.name == "egg_extraction" else "soil"

    def static_violations(self) -> list[str]:
        """Structural checks that need no machine state."""
        out = []
        if not self.steps:
            out.append("EmptyScript: no steps")
        if self.name == "egg_extraction" and not any(s.action == Action.GRIND for s in self.steps):
            out.append("EmptyGrind: egg extraction without a grind cycle")
        for i, step in enumerate(self.steps):
            for key in ("duration_s",):
                if key in step.params and step.params[key] < 0:
                    out.append(f"step {i} ({step.action}): negative {key}")
        return out

    def to_dict(self) -> dict:
        return {"name": self.name, "steps": [s.to_dict() for s in self.steps]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ProtocolScript":
        return cls(doc["name"], tuple(ProtocolStep.from_dict(s) for s in doc["steps"]))


def config_schema() -> dict:
    with resources.files("sievebot.data").joinpath("config.schema.json").open("rb") as fh:
        return json.load(fh)


def load_config(path: str | Path | None = None) -> dict:
    """Load the engine config (shipped default unless a path is given)."""
    if path is None:
        text = resources.files("sievebot.data").joinpath("config.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def _timing(config: dict, section: str, key: str) -> int:
    try:
        seconds = config["timing"][section][key]
    except KeyError:
        raise ConfigError(f"missing timing allocation timing.{section}.{key}") from None
    return round(seconds * 1000)


def build_cyst_protocol(config: dict) -> ProtocolScript:
    """Decant, wash, and stage the cyst-laden #60 sieve over the fines stack."""
    t = lambda key: _timing(config, "cyst", key)  # noqa: E731
    steps = (
        ProtocolStep(Action.DECANT, {"station": "load"}, t("decant_s")),
        ProtocolStep(Action.ROTATE, {"sieve": "#20", "station": "wash"}, t("rotate_s")),
        ProtocolStep(Action.COMPRESS, {"target": "full"}, t("compress_s")),
        ProtocolStep(
            Action.WASH,
            {"sieve": "#20", "duration_s": config["timing"]["cyst"]["wash_s"]},
            t("wash_s"),
        ),
        ProtocolStep(Action.COMPRESS, {"target": "uncompressed"}, t("uncompress_s")),
        ProtocolStep(
            Action.GRIPPER_TRANSFER,
            {"sieve": "#60", "to_level": "top", "above": "#200"},
            t("transfer_s"),
        ),
    )
    return ProtocolScript("cyst_extraction", steps)


def build_egg_protocol(config: dict) -> ProtocolScript:
    """Stack #60/#200/#500 under the grinder and run grind+spray cycles."""
    egg = config["timing"]["egg"]
    cycles = egg.get("cycles", 3)
    if cycles < 1:
        raise ConfigError("EmptyGrind: egg protocol needs at least one grind cycle")
    t = lambda key: _timing(config, "egg", key)  # noqa: E731
    hover = config.get("grinder", {}).get("hover_mm", 25.4)
    steps: list[ProtocolStep] = [
        ProtocolStep(Action.ROTATE, {"sieve": "#60", "station": "grind"}, t("rotate_s")),
        ProtocolStep(Action.COMPRESS, {"target": "full"}, t("compress_s")),
        ProtocolStep(Action.GRINDER_LOWER, {"to_mm": hover}, t("lower_s")),
    ]
    for cycle in range(1, cycles + 1):
        steps.append(ProtocolStep(Action.GRIND, {"duration_s": egg["grind_s"], "cycle": cycle}, t("grind_s")))
        steps.append(ProtocolStep(Action.GRINDER_RAISE, {"to_mm": hover}, t("raise_s")))
        steps.append(
            ProtocolStep(Action.NOZZLE_SPRAY, {"duration_s": egg["spray_s"], "cycle": cycle}, t("spray_s"))
        )
        steps.append(ProtocolStep(Action.GRINDER_LOWER, {"to_mm": 0.0}, t("lower_s")))
    steps.extend(
        (
            ProtocolStep(Action.GRINDER_RAISE, {"to_mm": "park", "stop_drill": True}, t("final_raise_s")),
            ProtocolStep(Action.COMPRESS, {"target": "uncompressed"}, t("uncompress_s")),
            ProtocolStep(Action.COLLECT_OUTPUT, {"sieve": "#500"}, t("collect_s")),
        )
    )
    return ProtocolScript("egg_extraction", tuple(steps))


def build_manual_protocol(config: dict) -> ProtocolScript:
    """Wet-sieving by hand: the same stages as dwell time, no machine motion."""
    manual = config["timing"]["manual"]
    steps = tuple(
        ProtocolStep(Action.DWELL, {"stage": key.removesuffix("_s")}, round(seconds * 1000))
        for key, seconds in manual.items()
    )
    return ProtocolScript("manual_bucket", steps)


_BUILDERS = {
    "cyst_extraction": build_cyst_protocol,
    "egg_extraction": build_egg_protocol,
    "manual_bucket": build_manual_protocol,
}


def build_protocol(name: str, config: dict) -> ProtocolScript:
    if name not in _BUILDERS:
        raise ConfigError(f"unknown protocol {name!r}")
    return _BUILDERS[name](config)


def load_script(source: str | Path) -> ProtocolScript:
    """Load a script from a shipped data file or an external JSON path."""
    path = Path(source)
    if path.suffix == ".json" and path.exists():
        return ProtocolScript.from_dict(json.loads(path.read_text()))
    res = resources.files("sievebot.data").joinpath(f"scripts/{source}.json")
    try:
        return ProtocolScript.from_dict(json.loads(res.read_text()))
    except FileNotFoundError:
        raise ConfigError(f"unknown script {source!r}") from None
