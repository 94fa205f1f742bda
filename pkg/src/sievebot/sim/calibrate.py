"""Parameter search against the published end-to-end recovery targets.

The experiments report only outcomes (first-iteration recovery percentage,
and a floor on cumulative recovery through two iterations), never per-step
efficiencies, so the transport parameters are fitted: bisection on the
suspension fraction (the normalized statistics are nearly invariant to the
rupture/transfer chain, which cancels between numerator and denominator),
with a small fallback grid over the chain parameters when bisection alone
cannot land inside tolerance.

Feasibility arithmetic: hitting a first-iteration mean of t1 while keeping
cumulative-through-two at or above c2 forces the second iteration to capture
at least (c2 - t1) / (100 - t1) of what the first left behind. That bound is
what rules out a constant-capture (geometric) iteration profile for the
published numbers and motivates the residual-depletion boost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .process import ExtinctionPlan, ProcessParams, run_replicates

__all__ = [
    "CalibrationError",
    "CalibrationTargets",
    "CalibrationResult",
    "required_second_iteration_capture",
    "evaluate_params",
    "calibrate",
]


class CalibrationError(RuntimeError):
    """Contradictory or unreachable targets; carries the best-found residual."""


def required_second_iteration_capture(iter1_pct: float, cum2_pct: float) -> float:
    """Minimum fraction of the iteration-1 leftovers that iteration 2 must recover."""
    if iter1_pct >= 100.0:
        return 0.0
    return (cum2_pct - iter1_pct) / (100.0 - iter1_pct)


@dataclass(frozen=True)
class CalibrationTargets:
    iter1_mean_pct: float
    cum2_min_pct: float = 94.0
    replicate_frac: float = 0.95  # fraction of replicates that must clear cum2_min
    tolerance_pp: float = 1.5

    def __post_init__(self) -> None:
        if not 0 < self.iter1_mean_pct <= 100:
            raise CalibrationError(f"iteration-1 target must be in (0, 100], got {self.iter1_mean_pct}")
        if not 0 < self.cum2_min_pct <= 100:
            raise CalibrationError(f"cumulative target must be in (0, 100], got {self.cum2_min_pct}")
        if self.iter1_mean_pct > self.cum2_min_pct:
            raise CalibrationError(
                "contradictory targets: iteration-1 mean exceeds the two-iteration cumulative"
            )


@dataclass
class Evaluation:
    iter1_mean: float
    iter1_sd: float
    cum2_mean: float
    cum2_frac_ok: float
    capture2: float


@dataclass
class CalibrationResult:
    params: ProcessParams
    targets: CalibrationTargets
    achieved: Evaluation
    required_capture2: float
    residual_pp: float
    evaluations: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "targets": {
                "iter1_mean_pct": self.targets.iter1_mean_pct,
                "cum2_min_pct": self.targets.cum2_min_pct,
            },
            "achieved": {
                "iter1_mean": round(self.achieved.iter1_mean, 3),
                "iter1_sd": round(self.achieved.iter1_sd, 3),
                "cum2_mean": round(self.achieved.cum2_mean, 3),
                "cum2_frac_ok": round(self.achieved.cum2_frac_ok, 4),
                "capture2": round(self.achieved.capture2, 4),
            },
            "required_capture2": round(self.required_capture2, 4),
            "residual_pp": round(self.residual_pp, 3),
            "evaluations": self.evaluations,
        }


def evaluate_params(
    params: ProcessParams,
    soil: str,
    method: str,
    targets: CalibrationTargets,
    seed: int,
    replicates: int,
    samples_n: int = 6,
    workers: int = 1,
) -> Evaluation:
    """Monte Carlo estimate of the target statistics under given parameters."""
    plan = ExtinctionPlan(soil=soil, method=method, samples_n=samples_n, seed=seed, params=params)
    reports = run_replicates(plan, replicates, workers=workers)
    iter1 = np.array([r.iteration_mean[0] for r in reports])
    iter1_sd = np.array([r.iteration_sd[0] for r in reports])
    cum2 = np.array([r.cum_pct[:, 1].mean() for r in reports])
    mean1 = float(iter1.mean())
    capture2 = required_second_iteration_capture(mean1, float(cum2.mean()))
    return Evaluation(mean1, float(iter1_sd.mean()), float(cum2.mean()), float((cum2 >= targets.cum2_min_pct).mean()), capture2)


def _bisect_f(
    base: ProcessParams,
    soil: str,
    method: str,
    targets: CalibrationTargets,
    seed: int,
    replicates: int,
    f_bounds: tuple[float, float],
    iterations: int = 8,
) -> tuple[float, int]:
    """Find f_suspend hitting the iteration-1 target; monotone in f.

    Common random numbers (fixed seed) make the objective deterministic, so
    plain bisection converges.
    """
    lo, hi = f_bounds
    evals = 0

    def mean1(f: float) -> float:
        nonlocal evals
        evals += 1
        return evaluate_params(replace(base, f_suspend=f), soil, method, targets, seed, replicates).iter1_mean

    m_lo, m_hi = mean1(lo), mean1(hi)
    target = targets.iter1_mean_pct
    if not m_lo <= target <= m_hi:
        best = lo if abs(m_lo - target) < abs(m_hi - target) else hi
        raise CalibrationError(
            f"target {target:.1f}% outside the reachable range "
            f"[{m_lo:.1f}, {m_hi:.1f}] for f in {f_bounds}; best f={best}"
        )
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mean1(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), evals


def calibrate(
    soil: str,
    method: str,
    targets: CalibrationTargets,
    base: ProcessParams | None = None,
    seed: int = 2024,
    search_replicates: int = 24,
    final_replicates: int = 64,
    f_bounds: tuple[float, float] = (0.05, 0.995),
    workers: int = 1,
) -> CalibrationResult:
    """Fit process parameters to the recovery targets for one soil/method."""
    base = base or ProcessParams(resuspension_gamma=2.0)
    required = required_second_iteration_capture(targets.iter1_mean_pct, targets.cum2_min_pct)

    if targets.iter1_mean_pct >= 100.0:
        # Boundary solution: a lossless chain recovers everything at once.
        params = ProcessParams.lossless()
        achieved = Evaluation(100.0, 0.0, 100.0, 1.0, 0.0)
        return CalibrationResult(params, targets, achieved, required, 0.0, evaluations=0)

    total_evals = 0
    notes: list[str] = []
    best: CalibrationResult | None = None
    # The chain parameters barely move the normalized statistics (they cancel
    # against the extinction denominator); try the base chain first and widen
    # only if bisection cannot land inside tolerance.
    chain_grid = [
        (base.w_transfer, base.r_rupture, base.e_release),
        (0.85, 0.72, 0.95),
        (0.75, 0.56, 0.85),
    ]
    for w, r, e in chain_grid:
        candidate_base = replace(base, w_transfer=w, r_rupture=r, e_release=e)
        try:
            f_star, evals = _bisect_f(
                candidate_base, soil, method, targets, seed, search_replicates, f_bounds
            )
        except CalibrationError as err:
            notes.append(str(err))
            total_evals += 2
            continue
        total_evals += evals
        params = replace(candidate_base, f_suspend=round(f_star, 4))
        achieved = evaluate_params(params, soil, method, targets, seed + 1, final_replicates, workers=workers)
        total_evals += 1
        residual = abs(achieved.iter1_mean - targets.iter1_mean_pct)
        result = CalibrationResult(params, targets, achieved, required, residual, total_evals, notes)
        if best is None or residual < best.residual_pp:
            best = result
        if residual <= targets.tolerance_pp and achieved.cum2_frac_ok >= targets.replicate_frac:
            return result
    if best is None:
        raise CalibrationError(
            f"target {targets.iter1_mean_pct:.1f}% outside the reachable range for every "
            f"chain candidate: {'; '.join(notes)}"
        )
    raise CalibrationError(
        f"targets unreachable: best residual {best.residual_pp:.2f} pp with "
        f"cum2 satisfied in {best.achieved.cum2_frac_ok:.0%} of replicates "
        f"(params {json.dumps(best.params.to_dict())})"
    )
