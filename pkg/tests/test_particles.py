from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sievebot.particles import (
    MESH_PORE_UM,
    DomainError,
    ParticleBatch,
    ParticleClass,
    SieveSpec,
    SoilSample,
    partition_batch,
    passes_sieve,
    standard_stack,
)
from .conftest import make_batch, random_batch


class TestPassesSieve:
    def test_cyst_passes_coarse_mesh(self):
        assert passes_sieve(300, 850) is True

    def test_equality_is_trapped(self):
        assert passes_sieve(850, 850) is False

    def test_egg_trapped_on_finest_sieve(self):
        assert passes_sieve(40, 25) is False

    @pytest.mark.parametrize("diameter,pore", [(0, 850), (-5, 850), (40, 0), (40, -1)])
    def test_non_positive_inputs_rejected(self, diameter, pore):
        with pytest.raises(DomainError):
            passes_sieve(diameter, pore)

    @given(d=st.integers(1, 3000), p=st.integers(1, 3000), p_smaller=st.integers(1, 3000))
    def test_trapped_stays_trapped_at_finer_pores(self, d, p, p_smaller):
        # a particle trapped at pore p is trapped at every pore p' <= p
        if p_smaller <= p and not passes_sieve(d, p):
            assert not passes_sieve(d, p_smaller)


class TestSieveSpec:
    def test_pore_mapping_is_fixed(self):
        assert MESH_PORE_UM == {20: 850, 60: 250, 200: 75, 500: 25}
        for mesh, pore in MESH_PORE_UM.items():
            assert SieveSpec.from_mesh(mesh).pore_um == pore

    def test_wrong_pore_rejected(self):
        with pytest.raises(DomainError):
            SieveSpec(20, 851)

    def test_unknown_mesh_rejected(self):
        with pytest.raises(DomainError):
            SieveSpec(40, 400)

    def test_standard_stack_ordered_by_decreasing_pore(self):
        pores = [s.pore_um for s in standard_stack()]
        assert pores == sorted(pores, reverse=True)

    def test_default_body_is_six_inch(self):
        assert SieveSpec.from_mesh(20).diameter_mm == pytest.approx(152.4)


def _partition_oracle(batch: ParticleBatch, pore: float):
    """Independent oracle: classify every occupied bin with passes_sieve."""
    passed, trapped = ParticleBatch.empty(), ParticleBatch.empty()
    for pclass in ParticleClass:
        for d in np.nonzero(batch.counts[pclass])[0]:
            target = passed if passes_sieve(int(d), pore) else trapped
            target.counts[pclass, d] = batch.counts[pclass, d]
    for pool_name in ("cyst_eggs", "debris_eggs"):
        pool = getattr(batch, pool_name)
        for d in np.nonzero(pool)[0]:
            target = passed if passes_sieve(int(d), pore) else trapped
            getattr(target, pool_name)[d] = pool[d]
    return passed, trapped


class TestPartition:
    def test_cysts_trapped_eggs_pass_at_250(self):
        batch = make_batch({ParticleClass.CYST: {400: 10}, ParticleClass.EGG: {50: 5}})
        passed, trapped = partition_batch(batch, 250)
        oracle_passed, oracle_trapped = _partition_oracle(batch, 250)
        assert passed.same_as(oracle_passed) and trapped.same_as(oracle_trapped)
        assert passed.counts[ParticleClass.EGG, 50] == 5
        assert trapped.counts[ParticleClass.CYST, 400] == 10
        assert passed.class_count(ParticleClass.CYST) == 0

    def test_empty_batch(self):
        passed, trapped = partition_batch(ParticleBatch.empty(), 250)
        assert passed.is_empty() and trapped.is_empty()

    def test_fines_pass_finest_sieve(self):
        batch = make_batch({ParticleClass.FINES: {10: 1000}})
        passed, trapped = partition_batch(batch, 25)
        assert passed.counts[ParticleClass.FINES, 10] == 1000 and trapped.is_empty()

    def test_non_positive_pore_rejected(self):
        with pytest.raises(DomainError):
            partition_batch(ParticleBatch.empty(), 0)

    @settings(max_examples=150, deadline=None)
    @given(seed=st.integers(0, 2**31), pore=st.sampled_from([850, 250, 75, 25, 1, 3000]))
    def test_partition_conserves_exactly(self, seed, pore):
        batch = random_batch(np.random.default_rng(seed))
        passed, trapped = partition_batch(batch, pore)
        recombined = passed.copy()
        recombined.add(trapped)
        assert recombined.same_as(batch)
        assert passed.total_eggs() + trapped.total_eggs() == batch.total_eggs()

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_partition_matches_oracle(self, seed):
        batch = random_batch(np.random.default_rng(seed), max_bins=8)
        for pore in (850, 250, 75, 25):
            passed, trapped = partition_batch(batch, pore)
            oracle_passed, oracle_trapped = _partition_oracle(batch, pore)
            assert passed.same_as(oracle_passed) and trapped.same_as(oracle_trapped)

    @settings(max_examples=80, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_stack_routing_equals_independent_classification(self, seed):
        """Sequential partition through the stack == per-bin first-trapping-pore rule."""
        batch = random_batch(np.random.default_rng(seed), max_bins=10)
        pores = [850, 250, 75, 25]
        remaining = batch
        sequential = []
        for pore in pores:
            passed, trapped = partition_batch(remaining, pore)
            sequential.append(trapped)
            remaining = passed
        sequential.append(remaining)  # drain

        # brute-force oracle: each occupied bin lands at the first pore that traps it
        buckets = [ParticleBatch.empty() for _ in range(len(pores) + 1)]
        for pclass in ParticleClass:
            for d in np.nonzero(batch.counts[pclass])[0]:
                level = next((i for i, p in enumerate(pores) if not passes_sieve(int(d), p)), len(pores))
                buckets[level].counts[pclass, d] = batch.counts[pclass, d]
        for got, expected in zip(sequential, buckets):
            assert np.array_equal(got.counts, expected.counts)


class TestBatchAndSample:
    def test_total_eggs_counts_all_three_pools(self):
        batch = make_batch({ParticleClass.CYST: {400: 2}, ParticleClass.EGG: {50: 7}}, cyst_eggs={400: 300})
        batch.counts[ParticleClass.CYST_DEBRIS, 400] = 1
        batch.debris_eggs[400] = 11
        assert batch.total_eggs() == 7 + 300 + 11

    def test_pools_require_carriers(self):
        batch = ParticleBatch.empty()
        batch.cyst_eggs[400] = 5
        with pytest.raises(DomainError):
            batch.validate()

    def test_negative_counts_rejected(self):
        batch = ParticleBatch.empty()
        batch.counts[0, 100] = -1
        with pytest.raises(DomainError):
            batch.validate()

    def test_sample_volume_positive(self):
        with pytest.raises(DomainError):
            SoilSample(batch=ParticleBatch.empty(), volume_cc=0)
