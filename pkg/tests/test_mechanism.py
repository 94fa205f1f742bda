from __future__ import annotations

import numpy as np
import pytest

from sievebot.mechanism import (
    Compression,
    GRINDER_PARK_MM,
    InterlockViolation,
    Level,
    MachineState,
    SlotEmpty,
    SlotOccupied,
    StageState,
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


def stacked_machine() -> MachineState:
    """#60/#200/#500 stacked at the grind station, fully compressed."""
    machine = initial_machine("cyst")
    machine = rotate_stage(machine, 1)
    return set_compression(machine, Compression.FULL)


class TestRotation:
    def test_plus_one(self):
        m = rotate_stage(initial_machine(), 1)
        assert m.stage.rotation_index == 1

    def test_full_revolution_is_identity(self):
        m0 = initial_machine()
        m = rotate_stage(m0, 4)
        assert m.stage.rotation_index == 0
        assert m.stage.slots == m0.stage.slots

    def test_rotation_blocked_while_compressed(self):
        m = set_compression(initial_machine(), Compression.FULL)
        with pytest.raises(InterlockViolation):
            rotate_stage(m, 1)

    def test_rotation_blocked_under_lowered_pad(self):
        # 60 mm is above the sieve rim (legal while uncompressed) but not clear
        m = grinder_set(initial_machine(), pad_height_mm=60.0)
        with pytest.raises(InterlockViolation):
            rotate_stage(m, 1)

    def test_rotation_blocked_while_sprayer_engaged(self):
        m = initial_machine()
        m = set_valve(m, "sprayer", True)
        m = sprayer_set(m, "#20", True)
        with pytest.raises(InterlockViolation):
            rotate_stage(m, 1)

    def test_rotation_equivariance(self):
        m0 = initial_machine()
        for k in range(1, 5):
            rotated = rotate_stage(m0, k)
            for level in range(3):
                for station in range(4):
                    assert rotated.stage.slots[level][station] == m0.stage.slots[level][(station - k) % 4]

    def test_slot_contents_rotate_with_stage(self):
        m = rotate_stage(initial_machine(), 1)
        assert m.stage.slots[Level.TOP][Station.WASH] == "#20"
        assert station_column(m, Station.GRIND) == ["#200", "#500"]


class TestCompression:
    def test_heights_are_pure_function_of_state(self):
        m = initial_machine()
        assert m.stage.level_heights_mm == pytest.approx((11.5 * 25.4, 7.0 * 25.4, 2.5 * 25.4))
        assert m.stage.level_heights_mm == pytest.approx((292.1, 177.8, 63.5))
        full = set_compression(m, Compression.FULL)
        assert full.stage.level_heights_mm == pytest.approx((292.1, 292.1, 292.1))

    def test_partial_raises_bottom_to_middle(self):
        partial = set_compression(initial_machine(), Compression.PARTIAL)
        assert partial.stage.level_heights_mm == pytest.approx((292.1, 177.8, 177.8))

    def test_full_to_full_is_noop(self):
        full = set_compression(initial_machine(), Compression.FULL)
        again = set_compression(full, Compression.FULL)
        assert again.stage == full.stage

    def test_compression_blocked_under_lowered_grinder(self):
        low = grinder_set(stacked_machine(), pad_height_mm=0.0)
        with pytest.raises(InterlockViolation):
            set_compression(low, Compression.UNCOMPRESSED)


class TestGripper:
    def test_transfer_moves_sieve_and_contents_binding(self):
        m = initial_machine()  # #60 at (middle, load); top of wash station free? top wash empty
        src = sieve_station(m, "#60")
        dst = (Level.TOP, Station.WASH)
        moved = gripper_transfer(m, src, dst)
        assert moved.stage.slots[Level.TOP][Station.WASH] == "#60"
        assert moved.stage.slots[src[0]][src[1]] is None
        assert moved.gripper.position == "parked" and moved.gripper.fingers == "open"

    def test_source_empty(self):
        with pytest.raises(SlotEmpty):
            gripper_transfer(initial_machine(), (Level.BOTTOM, Station.GRIND), (Level.TOP, Station.GRIND))

    def test_destination_occupied(self):
        m = initial_machine()
        with pytest.raises(SlotOccupied):
            gripper_transfer(m, (Level.MIDDLE, Station.LOAD), (Level.TOP, Station.LOAD))

    def test_transfer_blocked_while_compressed(self):
        m = set_compression(initial_machine(), Compression.FULL)
        with pytest.raises(InterlockViolation):
            gripper_transfer(m, (Level.MIDDLE, Station.LOAD), (Level.TOP, Station.WASH))


class TestGrinder:
    def test_grinding_contact_sequence(self):
        m = grinder_set(stacked_machine(), pad_height_mm=25.4)
        m = grinder_set(m, spinning=True)
        m = grinder_set(m, pad_height_mm=0.0)
        assert m.grinder.pad_height_mm == 0.0 and m.grinder.spinning
        assert not machine_violations(m)

    def test_raise_and_stop_returns_neutral(self):
        m = grinder_set(stacked_machine(), pad_height_mm=0.0, spinning=True)
        m = grinder_set(m, spinning=False)
        m = grinder_set(m, pad_height_mm=GRINDER_PARK_MM)
        assert m.grinder.raised and not m.grinder.spinning
        assert not machine_violations(m)

    def test_lowering_into_unstacked_column_blocked(self):
        with pytest.raises(InterlockViolation):
            grinder_set(initial_machine(), pad_height_mm=0.0)

    def test_lowering_onto_empty_station_blocked(self):
        m = initial_machine()
        m = set_compression(m, Compression.FULL)  # grind station is empty at rotation 0
        with pytest.raises(InterlockViolation):
            grinder_set(m, pad_height_mm=0.0)

    def test_negative_height_impossible(self):
        with pytest.raises(InterlockViolation):
            grinder_set(stacked_machine(), pad_height_mm=-1.0)


class TestSprayerAndValves:
    def test_bar_requires_water_pressure(self):
        with pytest.raises(InterlockViolation):
            sprayer_set(initial_machine(), "#20", True)

    def test_valve_close_blocked_while_bar_spins(self):
        m = set_valve(initial_machine(), "sprayer", True)
        m = sprayer_set(m, "#20", True)
        with pytest.raises(InterlockViolation):
            set_valve(m, "sprayer", False)

    def test_rpm_implies_drill_relay(self):
        m = set_drill(initial_machine(), True)
        assert m.drill_relay and m.grinder.spinning
        off = set_drill(m, False)
        assert off.grinder.rpm == 0.0


def _random_command(rng: np.random.Generator, m: MachineState):
    kind = rng.integers(0, 7)
    if kind == 0:
        return lambda s: rotate_stage(s, int(rng.integers(-3, 4)))
    if kind == 1:
        target = [Compression.UNCOMPRESSED, Compression.PARTIAL, Compression.FULL][rng.integers(0, 3)]
        return lambda s: set_compression(s, target)
    if kind == 2:
        src = (int(rng.integers(0, 3)), int(rng.integers(0, 4)))
        dst = (int(rng.integers(0, 3)), int(rng.integers(0, 4)))
        return lambda s: gripper_transfer(s, src, dst)
    if kind == 3:
        height = float(rng.choice([0.0, 10.0, 25.4, 76.2, GRINDER_PARK_MM, -5.0]))
        return lambda s: grinder_set(s, pad_height_mm=height)
    if kind == 4:
        return lambda s: set_drill(s, bool(rng.integers(0, 2)))
    if kind == 5:
        sieve = str(rng.choice(["#20", "#60", "#200", "#500", "#999"]))
        return lambda s: sprayer_set(s, sieve if rng.random() < 0.8 else None, bool(rng.integers(0, 2)))
    valve = str(rng.choice(["sprayer", "nozzle"]))
    return lambda s: set_valve(s, valve, bool(rng.integers(0, 2)))


def _slot_multiset(m: MachineState) -> list[str]:
    ids = [sid for level in m.stage.slots for sid in level if sid is not None]
    if m.gripper.holding:
        ids.append(m.gripper.holding)
    return sorted(ids)


def test_command_fuzz_small():
    """20k random commands: invariants always hold, rejections change nothing."""
    rng = np.random.default_rng(1234)
    m = initial_machine()
    initial_ids = _slot_multiset(m)
    rejected = 0
    for i in range(20_000):
        command = _random_command(rng, m)
        before = m
        try:
            m = command(m)
        except Exception:
            rejected += 1
            assert m is before  # transitions are pure: a raise leaves state untouched
        assert not machine_violations(m), machine_violations(m)
        if i % 50 == 0:
            assert _slot_multiset(m) == initial_ids
    assert not machine_violations(m)
    assert rejected > 0  # the fuzz actually exercised interlocks
