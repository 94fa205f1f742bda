#!/usr/bin/env python3
"""Benchmark the jitted kernels against the pure-numpy fallback.

Both backends draw from the same stream and produce bit-identical results
(verified here before timing); the comparison is purely about speed.

    python benchmarks/bench_kernels.py [--repeats 30]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sievebot.particles import N_BINS, ParticleClass
from sievebot.profiles import load_profile, synthesize_sample
from sievebot.sim import kernels
from sievebot.sim.process import ExtinctionPlan, load_process_params, run_extinction
from sievebot.sim.stream import derive_state


def _time(fn, repeats: int) -> float:
    fn()  # warm (JIT compile, cache touch)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_binomial(backend, repeats: int) -> float:
    rng = np.random.default_rng(1)
    counts = rng.integers(0, 60, size=3000).astype(np.int64)
    p = rng.random(3000)
    state = derive_state(1)
    return _time(lambda: backend.binomial_counts(counts, p, state), repeats)


def bench_move_masked(backend, repeats: int) -> float:
    sample = synthesize_sample(load_profile("muscatine"), seed=7)
    probs = np.full(len(ParticleClass), 0.8)
    mask = np.ones(N_BINS, dtype=bool)
    state = derive_state(2)

    def run():
        src = sample.batch.copy()
        dst = sample.batch.copy()
        dst.counts[:] = 0
        dst.cyst_eggs[:] = 0
        dst.debris_eggs[:] = 0
        loss = dst.copy()
        backend.move_masked(
            src.counts, dst.counts, loss.counts, probs, mask, 0.0,
            src.cyst_eggs, dst.cyst_eggs, loss.cyst_eggs,
            src.debris_eggs, dst.debris_eggs, loss.debris_eggs, state,
        )

    return _time(run, repeats)


def bench_replicate(name: str, repeats: int) -> float:
    kernels.set_backend(name)
    plan = ExtinctionPlan(soil="muscatine", method="robotic", seed=3,
                          params=load_process_params("muscatine_robotic"))
    try:
        return _time(lambda: run_extinction(plan), max(3, repeats // 5))
    finally:
        kernels.set_backend("auto")


def verify_parity() -> None:
    rng = np.random.default_rng(9)
    counts = rng.integers(0, 40, size=500).astype(np.int64)
    p = rng.random(500)
    state = derive_state(5)
    results = [kernels.get_backend(n).binomial_counts(counts, p, state) for n in ("numpy", "numba")]
    assert np.array_equal(results[0][0], results[1][0]) and results[0][1] == results[1][1]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    if not kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")
    verify_parity()
    print("backends produce bit-identical draws; timing best-of runs\n")
    rows = []
    for label, bench in (
        ("binomial_counts (3000 bins)", bench_binomial),
        ("move_masked (full sample)", bench_move_masked),
    ):
        times = {name: bench(kernels.get_backend(name), args.repeats) for name in ("numpy", "numba")}
        rows.append((label, times["numpy"], times["numba"]))
    rows.append(
        ("extinction replicate (6x4)",
         bench_replicate("numpy", args.repeats),
         bench_replicate("numba", args.repeats))
    )
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>7}")
    for label, t_np, t_nb in rows:
        print(f"{label:<{width}}  {t_np * 1e3:>8.3f}ms  {t_nb * 1e3:>8.3f}ms  {t_np / t_nb:>6.1f}x")


if __name__ == "__main__":
    main()
