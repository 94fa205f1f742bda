"""Particle populations, sieve geometry, and the pure sieving partition rule.

Everything downstream (washing, grinding, extinction statistics) is built on
two primitives defined here: a strict pass/trap decision for a single
effective diameter against a pore, and an exact integer partition of a
particle batch across that decision.

Particles are aggregated, not individual: a batch stores non-negative counts
per (class, 1-micron size bin) plus two per-bin egg pools (eggs held inside
intact cysts, and eggs left embedded in ruptured cyst debris). All operations
conserve both particle counts and the total egg inventory exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

__all__ = [
    "MAX_DIAMETER_UM",
    "N_BINS",
    "MESH_PORE_UM",
    "DomainError",
    "ParticleClass",
    "SieveSpec",
    "ParticleBatch",
    "SoilSample",
    "VesselRole",
    "Vessel",
    "passes_sieve",
    "partition_batch",
    "standard_stack",
]

# Size bins are 1 um wide and indexed directly by effective diameter.
MAX_DIAMETER_UM = 3000
N_BINS = MAX_DIAMETER_UM + 1

# US standard mesh number -> pore size in micrometers.
MESH_PORE_UM = {20: 850, 60: 250, 200: 75, 500: 25}

INCH_MM = 25.4


class DomainError(ValueError):
    """Raised for physically meaningless inputs (non-positive sizes, bad stacks)."""


class ParticleClass(IntEnum):
    LARGE_DEBRIS = 0
    CYST = 1
    CYST_DEBRIS = 2
    EGG = 3
    EGG_DEBRIS = 4
    FINES = 5


N_CLASSES = len(ParticleClass)


@dataclass(frozen=True)
class SieveSpec:
    """A standard test sieve: mesh number, pore size, and body diameter."""

    mesh_number: int
    pore_um: int
    diameter_mm: float = 6 * INCH_MM

    def __post_init__(self) -> None:
        if self.mesh_number not in MESH_PORE_UM:
            raise DomainError(f"unsupported mesh number: {self.mesh_number}")
        if self.pore_um != MESH_PORE_UM[self.mesh_number]:
            raise DomainError(
                f"mesh #{self.mesh_number} must have {MESH_PORE_UM[self.mesh_number]} um pores,"
                f" got {self.pore_um}"
            )

    @classmethod
    def from_mesh(cls, mesh_number: int) -> "SieveSpec":
        return cls(mesh_number, MESH_PORE_UM[mesh_number])

    @property
    def sieve_id(self) -> str:
        return f"#{self.mesh_number}"


def standard_stack() -> list[SieveSpec]:
    """The full four-sieve stack, ordered top (coarsest) to bottom (finest)."""
    return [SieveSpec.from_mesh(m) for m in (20, 60, 200, 500)]


def passes_sieve(diameter_um: float, pore_um: float) -> bool:
    """Whether a particle falls through a pore.

    Strict inequality: a particle exactly as large as the pore is trapped.
    """
    if diameter_um <= 0:
        raise DomainError(f"diameter must be positive, got {diameter_um}")
    if pore_um <= 0:
        raise DomainError(f"pore size must be positive, got {pore_um}")
    return diameter_um < pore_um


@dataclass
class ParticleBatch:
    """Counts of particles per (class, size bin), plus per-bin egg pools.

    ``counts[c, d]`` is the number of class-``c`` particles with effective
    diameter ``d`` um. ``cyst_eggs[d]`` is the total number of eggs inside
    the intact cysts in bin ``d``; ``debris_eggs[d]`` the eggs still embedded
    in ruptured cyst debris in bin ``d``.
    """

    counts: np.ndarray = field(default_factory=lambda: np.zeros((N_CLASSES, N_BINS), dtype=np.int64))
    cyst_eggs: np.ndarray = field(default_factory=lambda: np.zeros(N_BINS, dtype=np.int64))
    debris_eggs: np.ndarray = field(default_factory=lambda: np.zeros(N_BINS, dtype=np.int64))

    @classmethod
    def empty(cls) -> "ParticleBatch":
        return cls()

    @classmethod
    def from_spec(cls, spec: dict[ParticleClass, dict[int, int]]) -> "ParticleBatch":
        """Build a batch from {class: {diameter_um: count}} (eggs pools zero)."""
        batch = cls()
        for pclass, bins in spec.items():
            for diameter, count in bins.items():
                if not 1 <= diameter <= MAX_DIAMETER_UM:
                    raise DomainError(f"diameter {diameter} um out of range")
                if count < 0:
                    raise DomainError("counts must be non-negative")
                batch.counts[pclass, diameter] += count
        return batch

    def copy(self) -> "ParticleBatch":
        return ParticleBatch(self.counts.copy(), self.cyst_eggs.copy(), self.debris_eggs.copy())

    def add(self, other: "ParticleBatch") -> None:
        self.counts += other.counts
        self.cyst_eggs += other.cyst_eggs
        self.debris_eggs += other.debris_eggs

    def total_particles(self) -> int:
        return int(self.counts.sum())

    def class_count(self, pclass: ParticleClass) -> int:
        return int(self.counts[pclass].sum())

    def total_eggs(self) -> int:
        """Free eggs plus eggs inside intact cysts plus eggs embedded in debris."""
        return int(self.counts[ParticleClass.EGG].sum() + self.cyst_eggs.sum() + self.debris_eggs.sum())

    def is_empty(self) -> bool:
        return not (self.counts.any() or self.cyst_eggs.any() or self.debris_eggs.any())

    def same_as(self, other: "ParticleBatch") -> bool:
        return (
            np.array_equal(self.counts, other.counts)
            and np.array_equal(self.cyst_eggs, other.cyst_eggs)
            and np.array_equal(self.debris_eggs, other.debris_eggs)
        )

    def validate(self) -> None:
        if self.counts.shape != (N_CLASSES, N_BINS):
            raise DomainError("bad counts shape")
        if (self.counts < 0).any() or (self.cyst_eggs < 0).any() or (self.debris_eggs < 0).any():
            raise DomainError("negative counts")
        if self.counts[:, 0].any() or self.cyst_eggs[0] or self.debris_eggs[0]:
            raise DomainError("bin 0 (zero diameter) must be empty")
        # Egg pools need carriers: no eggs inside cysts/debris that do not exist.
        if (self.cyst_eggs[self.counts[ParticleClass.CYST] == 0] != 0).any():
            raise DomainError("cyst egg pool without cysts")
        if (self.debris_eggs[self.counts[ParticleClass.CYST_DEBRIS] == 0] != 0).any():
            raise DomainError("debris egg pool without debris")

    def to_sparse(self) -> dict:
        """JSON-friendly sparse form: {class name: {diameter: count}} plus pools."""
        out: dict = {"classes": {}, "cyst_eggs": {}, "debris_eggs": {}}
        for pclass in ParticleClass:
            row = self.counts[pclass]
            bins = np.nonzero(row)[0]
            if bins.size:
                out["classes"][pclass.name.lower()] = {int(d): int(row[d]) for d in bins}
        for key, pool in (("cyst_eggs", self.cyst_eggs), ("debris_eggs", self.debris_eggs)):
            bins = np.nonzero(pool)[0]
            if bins.size:
                out[key] = {int(d): int(pool[d]) for d in bins}
        return out


@dataclass
class SoilSample:
    """A field soil sample as loaded into the bucket."""

    batch: ParticleBatch
    volume_cc: float = 100.0
    origin_label: str = ""

    def __post_init__(self) -> None:
        if self.volume_cc <= 0:
            raise DomainError(f"sample volume must be positive, got {self.volume_cc}")


class VesselRole(IntEnum):
    SIEVE_SURFACE = 0
    BUCKET = 1
    SUSPENSION_COLUMN = 2
    COLLECTION_CONTAINER = 3
    DRAIN = 4
    WASTE = 5


@dataclass
class Vessel:
    """A place particles can sit: a sieve surface, the bucket, the drain, ..."""

    role: VesselRole
    contents: ParticleBatch = field(default_factory=ParticleBatch.empty)
    mesh: int | None = None  # set for SIEVE_SURFACE vessels

    @property
    def vessel_id(self) -> str:
        if self.role is VesselRole.SIEVE_SURFACE:
            return f"#{self.mesh}"
        return self.role.name.lower()


def partition_batch(batch: ParticleBatch, pore_um: float) -> tuple[ParticleBatch, ParticleBatch]:
    """Split a batch across one sieve: (passed, trapped).

    Every bin is routed wholesale by :func:`passes_sieve`; the two halves sum
    back to the input exactly, egg pools included.
    """
    if pore_um <= 0:
        raise DomainError(f"pore size must be positive, got {pore_um}")
    mask = np.arange(N_BINS) < pore_um  # strict: diameter == pore is trapped
    passed = ParticleBatch(
        np.where(mask, batch.counts, 0),
        np.where(mask, batch.cyst_eggs, 0),
        np.where(mask, batch.debris_eggs, 0),
    )
    trapped = ParticleBatch(
        np.where(mask, 0, batch.counts),
        np.where(mask, 0, batch.cyst_eggs),
        np.where(mask, 0, batch.debris_eggs),
    )
    return passed, trapped
