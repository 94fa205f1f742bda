from __future__ import annotations

import copy
import json
from importlib import resources

import pytest

from sievebot.engine import validate_script
from sievebot.protocol import (
    Action,
    ConfigError,
    ProtocolScript,
    ProtocolStep,
    build_cyst_protocol,
    build_egg_protocol,
    build_manual_protocol,
    load_script,
)


class TestBuilders:
    def test_cyst_script_totals_140_s(self, config):
        assert build_cyst_protocol(config).expected_total_ms == 140_000

    def test_egg_script_totals_98_s(self, config):
        assert build_egg_protocol(config).expected_total_ms == 98_000

    def test_grind_plus_spray_sums_60_s(self, config):
        script = build_egg_protocol(config)
        segment = sum(
            s.duration_ms for s in script.steps if s.action in (Action.GRIND, Action.NOZZLE_SPRAY)
        )
        assert segment == 60_000
        assert sum(1 for s in script.steps if s.action == Action.GRIND) == 3

    def test_zero_wash_drops_thirty_seconds(self, config):
        cfg = copy.deepcopy(config)
        cfg["timing"]["cyst"]["wash_s"] = 0
        assert build_cyst_protocol(cfg).expected_total_ms == 110_000  # 140 - 30

    def test_single_cycle_script(self, config):
        cfg = copy.deepcopy(config)
        cfg["timing"]["egg"]["cycles"] = 1
        script = build_egg_protocol(cfg)
        segment = sum(
            s.duration_ms for s in script.steps if s.action in (Action.GRIND, Action.NOZZLE_SPRAY)
        )
        assert segment == 20_000  # 1 x (10 + 10)

    def test_zero_cycles_rejected(self, config):
        cfg = copy.deepcopy(config)
        cfg["timing"]["egg"]["cycles"] = 0
        with pytest.raises(ConfigError, match="EmptyGrind"):
            build_egg_protocol(cfg)

    def test_missing_allocation_is_config_error(self, config):
        cfg = copy.deepcopy(config)
        del cfg["timing"]["cyst"]["transfer_s"]
        with pytest.raises(ConfigError):
            build_cyst_protocol(cfg)

    def test_manual_script_duration_in_published_window(self, config):
        total = build_manual_protocol(config).expected_total_ms
        assert 7 * 60_000 <= total <= 10 * 60_000


class TestShippedScripts:
    @pytest.mark.parametrize("name,builder", [
        ("cyst_extraction", build_cyst_protocol),
        ("egg_extraction", build_egg_protocol),
        ("manual_bucket", build_manual_protocol),
    ])
    def test_data_files_match_builders(self, config, name, builder):
        shipped = load_script(name)
        assert shipped.to_dict() == builder(config).to_dict()

    def test_scripts_are_plain_data(self):
        raw = resources.files("sievebot.data").joinpath("scripts/egg_extraction.json").read_text()
        doc = json.loads(raw)
        script = ProtocolScript.from_dict(doc)
        assert script.expected_total_ms == 98_000


class TestValidation:
    def test_shipped_scripts_validate_clean(self, config):
        assert validate_script(build_cyst_protocol(config), config) == []
        assert validate_script(build_egg_protocol(config), config) == []
        assert validate_script(build_manual_protocol(config), config) == []

    def test_rotation_while_compressed_reported(self, config):
        script = build_cyst_protocol(config)
        steps = list(script.steps)
        # inject a rotate between Compress Full and the wash (stage still stacked)
        steps.insert(3, ProtocolStep(Action.ROTATE, {"sieve": "#20", "station": "grind"}, 1000))
        bad = ProtocolScript("cyst_extraction", tuple(steps))
        violations = validate_script(bad, config)
        assert violations and "compressed" in violations[0]

    def test_grind_before_compress_reported(self, config):
        steps = (
            ProtocolStep(Action.ROTATE, {"sieve": "#60", "station": "grind"}, 1000),
            ProtocolStep(Action.GRIND, {"duration_s": 10, "cycle": 1}, 10_000),
        )
        bad = ProtocolScript("egg_extraction", steps)
        violations = validate_script(bad, config)
        assert violations and "unstacked" in violations[0]

    def test_empty_script_reported(self):
        assert ProtocolScript("cyst_extraction", ()).static_violations()

    def test_unknown_action_rejected(self):
        with pytest.raises(ConfigError):
            ProtocolStep("levitate", {}, 10)

    def test_negative_duration_rejected(self):
        with pytest.raises(ConfigError):
            ProtocolStep(Action.DWELL, {}, -1)
