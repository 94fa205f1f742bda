"""Sample profiles: configurable particle populations and their synthesis.

A profile is a JSON document describing, per particle class, how many
particles to draw, the inclusive size range, and (for cysts) the egg-content
distribution. Profiles are configuration, not ground truth: field soil size
distributions are not published, so the shipped defaults only pin down what
matters for routing (which sieve traps which class).
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .particles import MAX_DIAMETER_UM, ParticleBatch, ParticleClass, SoilSample

__all__ = [
    "ProfileError",
    "SampleProfile",
    "load_profile",
    "profile_schema",
    "synthesize_sample",
]

_CLASS_KEYS = {
    "large_debris": ParticleClass.LARGE_DEBRIS,
    "cyst": ParticleClass.CYST,
    "cyst_debris": ParticleClass.CYST_DEBRIS,
    "egg": ParticleClass.EGG,
    "egg_debris": ParticleClass.EGG_DEBRIS,
    "fines": ParticleClass.FINES,
}


class ProfileError(ValueError):
    """Invalid sample profile document."""


@functools.lru_cache(maxsize=1)
def profile_schema() -> dict:
    with resources.files("sievebot.data").joinpath("profile.schema.json").open("rb") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class SampleProfile:
    """Validated sample profile."""

    name: str
    volume_cc: float
    classes: dict[str, dict[str, Any]]

    @classmethod
    def from_dict(cls, doc: dict) -> "SampleProfile":
        try:
            jsonschema.validate(doc, profile_schema())
        except jsonschema.ValidationError as err:
            raise ProfileError(f"profile does not match schema: {err.message}") from err
        for key, spec in doc["classes"].items():
            lo, hi = spec["size_um"]
            if lo > hi:
                raise ProfileError(f"{key}: empty size range [{lo}, {hi}]")
            if hi > MAX_DIAMETER_UM:
                raise ProfileError(f"{key}: sizes above {MAX_DIAMETER_UM} um unsupported")
            count = spec["count"]
            if count.get("mean", 0) < 0 or count.get("value", 0) < 0:
                raise ProfileError(f"{key}: negative count")
        return cls(doc["name"], float(doc.get("volume_cc", 100.0)), doc["classes"])


@functools.lru_cache(maxsize=32)
def load_profile(source: str | Path) -> SampleProfile:
    """Load a profile by shipped name ("muscatine", "nevada", ...) or file path."""
    path = Path(source)
    if path.suffix == ".json" and path.exists():
        doc = json.loads(path.read_text())
    else:
        res = resources.files("sievebot.data").joinpath(f"profiles/{source}.json")
        try:
            doc = json.loads(res.read_text())
        except FileNotFoundError:
            raise ProfileError(f"unknown profile: {source!r}") from None
    return SampleProfile.from_dict(doc)


def _draw_count(rng: np.random.Generator, spec: dict) -> int:
    dist = spec["dist"]
    if dist == "fixed":
        return int(spec["value"])
    if dist == "poisson":
        return int(rng.poisson(spec["mean"]))
    raise ProfileError(f"unsupported count distribution: {dist}")


def _draw_egg_contents(rng: np.random.Generator, spec: dict, n: int) -> np.ndarray:
    dist = spec["dist"]
    if dist == "fixed":
        return np.full(n, int(spec["value"]), dtype=np.int64)
    if dist == "negative_binomial":
        mean = spec["mean"]
        dispersion = spec.get("dispersion", 8.0)
        p = dispersion / (dispersion + mean)
        draws = rng.negative_binomial(dispersion, p, size=n).astype(np.int64)
        return np.clip(draws, spec.get("min", 0), spec.get("max", 400))
    raise ProfileError(f"unsupported egg content distribution: {dist}")


def synthesize_sample(profile: SampleProfile, seed: int) -> SoilSample:
    """Draw a concrete soil sample from a profile, deterministically per seed.

    Sizes are uniform integers over the class's inclusive range; cyst egg
    contents are summed into the per-bin intact-cyst pool.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x5A11,)))
    batch = ParticleBatch.empty()
    for key in sorted(profile.classes):
        spec = profile.classes[key]
        pclass = _CLASS_KEYS[key]
        n = _draw_count(rng, spec["count"])
        if n == 0:
            continue
        lo, hi = spec["size_um"]
        sizes = rng.integers(lo, hi + 1, size=n)
        np.add.at(batch.counts[pclass], sizes, 1)
        if pclass is ParticleClass.CYST:
            contents = _draw_egg_contents(rng, spec["egg_content"], n)
            np.add.at(batch.cyst_eggs, sizes, contents)
    batch.validate()
    return SoilSample(batch=batch, volume_cc=profile.volume_cc, origin_label=profile.name)
