"""Hot sampling kernels with twin backends: numba @njit loops and pure numpy.

Both backends consume the same SplitMix64 stream in the same order, so they
produce bit-identical results; the numba path just avoids the temporaries of
the vectorized path. The backend is chosen at import time from the
``SIEVEBOT_KERNELS`` environment variable (``auto`` | ``numba`` | ``numpy``;
``auto`` prefers numba when importable) and can be switched at runtime with
:func:`set_backend`. ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .stream import GAMMA, MASK64

__all__ = [
    "NUMBA_AVAILABLE",
    "active_backend",
    "set_backend",
    "binomial_counts",
    "assign_bins",
    "move_masked",
    "split_pool",
    "get_backend",
]

# rows of the counts matrix that carry an attached egg pool
_CYST_ROW = 1
_DEBRIS_ROW = 2

_GAMMA_U64 = np.uint64(GAMMA)
_MUL1_U64 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2_U64 = np.uint64(0x94D049BB133111EB)
_INV53 = 2.0**-53


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _MUL1_U64
    z = z ^ (z >> np.uint64(27))
    z = z * _MUL2_U64
    return z ^ (z >> np.uint64(31))


def _uniforms_np(state: int, n: int) -> tuple[np.ndarray, int]:
    """n sequential uniforms from the stream; returns (u, new_state)."""
    steps = np.arange(1, n + 1, dtype=np.uint64) * _GAMMA_U64 + np.uint64(state & MASK64)
    u = (_mix64_array(steps) >> np.uint64(11)).astype(np.float64) * _INV53
    return u, (state + n * GAMMA) & MASK64


def _binomial_counts_np(counts: np.ndarray, p: np.ndarray, state: int) -> tuple[np.ndarray, int]:
    total = int(counts.sum())
    out = np.zeros(counts.shape[0], dtype=np.int64)
    if total == 0:
        return out, state
    u, new_state = _uniforms_np(state, total)
    idx = np.repeat(np.arange(counts.shape[0]), counts)
    hits = idx[u < p[idx]]
    out += np.bincount(hits, minlength=counts.shape[0]).astype(np.int64)
    return out, new_state


def _assign_bins_np(n: int, lo: int, hi: int, state: int) -> tuple[np.ndarray, int]:
    span = hi - lo + 1
    if n == 0:
        return np.zeros(span, dtype=np.int64), state
    u, new_state = _uniforms_np(state, n)
    offsets = (u * span).astype(np.int64)
    return np.bincount(offsets, minlength=span).astype(np.int64), new_state


def _move_masked_np(
    src: np.ndarray,
    dst: np.ndarray,
    loss: np.ndarray,
    probs: np.ndarray,
    mask: np.ndarray,
    loss_fraction: float,
    src_cyst: np.ndarray,
    dst_cyst: np.ndarray,
    loss_cyst: np.ndarray,
    src_debris: np.ndarray,
    dst_debris: np.ndarray,
    loss_debris: np.ndarray,
    state: int,
) -> tuple[int, int]:
    """Masked per-particle move across a whole counts matrix.

    Draw order contract (shared with the numba twin): one Bernoulli per
    particle over the occupied masked cells in row-major order, then, only if
    loss_fraction > 0, one Bernoulli per *moved* particle in the same cell
    order. Egg pools follow their carrier rows by deterministic floor-split
    against the pre-move counts.
    """
    rows, bins = np.nonzero(src * mask[None, :])
    if rows.size == 0:
        return 0, state
    counts = src[rows, bins]
    moved, state = _binomial_counts_np(counts, probs[rows], state)
    if loss_fraction > 0.0:
        lost, state = _binomial_counts_np(moved, np.full(rows.size, loss_fraction), state)
    else:
        lost = np.zeros_like(moved)
    for pool_row, s_pool, d_pool, l_pool in (
        (_CYST_ROW, src_cyst, dst_cyst, loss_cyst),
        (_DEBRIS_ROW, src_debris, dst_debris, loss_debris),
    ):
        sel = rows == pool_row
        if not sel.any():
            continue
        pbins = bins[sel]
        pool_moved = split_pool(s_pool[pbins], moved[sel], counts[sel])
        pool_lost = split_pool(pool_moved, lost[sel], moved[sel])
        s_pool[pbins] -= pool_moved
        d_pool[pbins] += pool_moved - pool_lost
        l_pool[pbins] += pool_lost
    src[rows, bins] -= moved
    dst[rows, bins] += moved - lost
    loss[rows, bins] += lost
    return int(moved.sum()), state


def split_pool(pool: np.ndarray, moved: np.ndarray, total: np.ndarray) -> np.ndarray:
    """Deterministic proportional split of per-bin integer pools.

    When ``moved[i]`` of ``total[i]`` carrier particles leave a bin, the
    attached pool follows as floor(pool * moved / total). Exact at the
    boundaries (all or none move), so lossless runs stay integer-exact.
    """
    moved_pool = np.zeros_like(pool)
    nz = total > 0
    moved_pool[nz] = (pool[nz] * moved[nz]) // total[nz]
    return moved_pool


try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

if NUMBA_AVAILABLE:

    @njit(cache=True, nogil=True)
    def _binomial_counts_nb(counts, p, state):  # pragma: no cover - exercised via parity tests
        s = np.uint64(state)
        out = np.zeros(counts.shape[0], dtype=np.int64)
        for i in range(counts.shape[0]):
            pi = p[i]
            k = 0
            for _ in range(counts[i]):
                s = s + _GAMMA_U64
                z = s ^ (s >> np.uint64(30))
                z = z * _MUL1_U64
                z = z ^ (z >> np.uint64(27))
                z = z * _MUL2_U64
                z = z ^ (z >> np.uint64(31))
                if (z >> np.uint64(11)) * _INV53 < pi:
                    k += 1
            out[i] = k
        return out, s

    @njit(cache=True, nogil=True)
    def _assign_bins_nb(n, lo, hi, state):  # pragma: no cover - exercised via parity tests
        s = np.uint64(state)
        span = hi - lo + 1
        hist = np.zeros(span, dtype=np.int64)
        for _ in range(n):
            s = s + _GAMMA_U64
            z = s ^ (s >> np.uint64(30))
            z = z * _MUL1_U64
            z = z ^ (z >> np.uint64(27))
            z = z * _MUL2_U64
            z = z ^ (z >> np.uint64(31))
            u = (z >> np.uint64(11)) * _INV53
            hist[int(u * span)] += 1
        return hist, s

    @njit(cache=True, nogil=True)
    def _move_masked_nb(  # pragma: no cover - exercised via parity tests
        src, dst, loss, probs, mask, loss_fraction,
        src_cyst, dst_cyst, loss_cyst, src_debris, dst_debris, loss_debris, state,
    ):
        s = np.uint64(state)
        nrows, nbins = src.shape
        moved = np.zeros((nrows, nbins), dtype=np.int64)
        lost = np.zeros((nrows, nbins), dtype=np.int64)
        total_moved = 0
        for r in range(nrows):
            pr = probs[r]
            for b in range(nbins):
                if mask[b] and src[r, b] > 0:
                    k = 0
                    for _ in range(src[r, b]):
                        s = s + _GAMMA_U64
                        z = s ^ (s >> np.uint64(30))
                        z = z * _MUL1_U64
                        z = z ^ (z >> np.uint64(27))
                        z = z * _MUL2_U64
                        z = z ^ (z >> np.uint64(31))
                        if (z >> np.uint64(11)) * _INV53 < pr:
                            k += 1
                    moved[r, b] = k
                    total_moved += k
        if loss_fraction > 0.0:
            for r in range(nrows):
                for b in range(nbins):
                    if mask[b] and src[r, b] > 0:
                        k = 0
                        for _ in range(moved[r, b]):
                            s = s + _GAMMA_U64
                            z = s ^ (s >> np.uint64(30))
                            z = z * _MUL1_U64
                            z = z ^ (z >> np.uint64(27))
                            z = z * _MUL2_U64
                            z = z ^ (z >> np.uint64(31))
                            if (z >> np.uint64(11)) * _INV53 < loss_fraction:
                                k += 1
                        lost[r, b] = k
        for r, s_pool, d_pool, l_pool in (
            (_CYST_ROW, src_cyst, dst_cyst, loss_cyst),
            (_DEBRIS_ROW, src_debris, dst_debris, loss_debris),
        ):
            for b in range(nbins):
                if mask[b] and src[r, b] > 0 and s_pool[b] > 0:
                    pool_moved = s_pool[b] * moved[r, b] // src[r, b]
                    if moved[r, b] > 0:
                        pool_lost = pool_moved * lost[r, b] // moved[r, b]
                    else:
                        pool_lost = 0
                    s_pool[b] -= pool_moved
                    d_pool[b] += pool_moved - pool_lost
                    l_pool[b] += pool_lost
        for r in range(nrows):
            for b in range(nbins):
                if moved[r, b] > 0:
                    src[r, b] -= moved[r, b]
                    dst[r, b] += moved[r, b] - lost[r, b]
                    loss[r, b] += lost[r, b]
        return total_moved, s


def _binomial_counts_numba(counts: np.ndarray, p: np.ndarray, state: int) -> tuple[np.ndarray, int]:
    out, s = _binomial_counts_nb(counts, np.ascontiguousarray(p, dtype=np.float64), np.uint64(state & MASK64))
    return out, int(s)


def _assign_bins_numba(n: int, lo: int, hi: int, state: int) -> tuple[np.ndarray, int]:
    hist, s = _assign_bins_nb(n, lo, hi, np.uint64(state & MASK64))
    return hist, int(s)


def _move_masked_numba(src, dst, loss, probs, mask, loss_fraction, *pools_and_state):
    *pools, state = pools_and_state
    total, s = _move_masked_nb(
        src, dst, loss,
        np.ascontiguousarray(probs, dtype=np.float64), mask, float(loss_fraction),
        *pools, np.uint64(state & MASK64),
    )
    return int(total), int(s)


@dataclass(frozen=True)
class Backend:
    name: str
    binomial_counts: Callable
    assign_bins: Callable
    move_masked: Callable


_BACKENDS = {"numpy": Backend("numpy", _binomial_counts_np, _assign_bins_np, _move_masked_np)}
if NUMBA_AVAILABLE:
    _BACKENDS["numba"] = Backend("numba", _binomial_counts_numba, _assign_bins_numba, _move_masked_numba)


def get_backend(name: str) -> Backend:
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {sorted(_BACKENDS)}")
    return _BACKENDS[name]


def _resolve(name: str) -> Backend:
    if name == "auto":
        return _BACKENDS["numba"] if NUMBA_AVAILABLE else _BACKENDS["numpy"]
    return get_backend(name)


_ACTIVE = _resolve(os.environ.get("SIEVEBOT_KERNELS", "auto"))


def active_backend() -> str:
    return _ACTIVE.name


def set_backend(name: str) -> str:
    """Switch the active backend ("numpy", "numba", or "auto"); returns the new name."""
    global _ACTIVE
    _ACTIVE = _resolve(name)
    return _ACTIVE.name


def binomial_counts(counts: np.ndarray, p: np.ndarray, state: int) -> tuple[np.ndarray, int]:
    return _ACTIVE.binomial_counts(counts, p, state)


def assign_bins(n: int, lo: int, hi: int, state: int) -> tuple[np.ndarray, int]:
    return _ACTIVE.assign_bins(n, lo, hi, state)


def move_masked(*args) -> tuple[int, int]:
    return _ACTIVE.move_masked(*args)
