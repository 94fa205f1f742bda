from __future__ import annotations

import numpy as np
import pytest

from sievebot.particles import ParticleBatch, ParticleClass
from sievebot.profiles import SampleProfile
from sievebot.protocol import load_config


@pytest.fixture(scope="session")
def config() -> dict:
    return load_config()


def make_batch(spec: dict[ParticleClass, dict[int, int]], cyst_eggs: dict[int, int] | None = None) -> ParticleBatch:
    batch = ParticleBatch.from_spec(spec)
    for diameter, eggs in (cyst_eggs or {}).items():
        batch.cyst_eggs[diameter] += eggs
    batch.validate()
    return batch


def random_batch(rng: np.random.Generator, max_bins: int = 12, max_count: int = 50) -> ParticleBatch:
    batch = ParticleBatch.empty()
    n_entries = rng.integers(0, max_bins + 1)
    for _ in range(n_entries):
        pclass = ParticleClass(int(rng.integers(0, len(ParticleClass))))
        diameter = int(rng.integers(1, 3001))
        batch.counts[pclass, diameter] += int(rng.integers(1, max_count))
        if pclass is ParticleClass.CYST:
            batch.cyst_eggs[diameter] += int(rng.integers(0, 400))
        if pclass is ParticleClass.CYST_DEBRIS:
            batch.debris_eggs[diameter] += int(rng.integers(0, 100))
    return batch


def tiny_profile(cysts: int = 40, egg_content: int = 100, extras: bool = True) -> SampleProfile:
    classes = {
        "cyst": {
            "count": {"dist": "fixed", "value": cysts},
            "size_um": [251, 849],
            "egg_content": {"dist": "fixed", "value": egg_content},
        }
    }
    if extras:
        classes.update(
            {
                "large_debris": {"count": {"dist": "fixed", "value": 300}, "size_um": [851, 3000]},
                "egg_debris": {"count": {"dist": "fixed", "value": 120}, "size_um": [26, 74]},
                "fines": {"count": {"dist": "fixed", "value": 500}, "size_um": [1, 25]},
            }
        )
    return SampleProfile.from_dict({"name": "tiny", "volume_cc": 100, "classes": classes})
