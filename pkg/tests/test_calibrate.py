from __future__ import annotations

import pytest

from sievebot.sim.calibrate import (
    CalibrationError,
    CalibrationTargets,
    calibrate,
    evaluate_params,
    required_second_iteration_capture,
)
from sievebot.sim.process import ProcessParams, load_process_params


class TestCaptureBound:
    def test_nevada_bound_matches_arithmetic_oracle(self):
        # (94 - 66.8) / (100 - 66.8), computed independently
        oracle = (94.0 - 66.8) / (100.0 - 66.8)
        assert required_second_iteration_capture(66.8, 94.0) == pytest.approx(oracle, abs=1e-12)
        assert required_second_iteration_capture(66.8, 94.0) == pytest.approx(0.819, abs=5e-4)

    def test_muscatine_bound(self):
        oracle = (94.0 - 77.8) / (100.0 - 77.8)
        assert required_second_iteration_capture(77.8, 94.0) == pytest.approx(oracle, abs=1e-12)
        assert required_second_iteration_capture(77.8, 94.0) == pytest.approx(0.7297, abs=5e-4)

    def test_full_first_iteration_needs_nothing(self):
        assert required_second_iteration_capture(100.0, 100.0) == 0.0


class TestTargetValidation:
    def test_contradictory_targets_rejected(self):
        # cumulative recovery can never fall below iteration 1's share
        with pytest.raises(CalibrationError):
            CalibrationTargets(iter1_mean_pct=96.0, cum2_min_pct=94.0)

    def test_out_of_range_targets_rejected(self):
        with pytest.raises(CalibrationError):
            CalibrationTargets(iter1_mean_pct=0.0)
        with pytest.raises(CalibrationError):
            CalibrationTargets(iter1_mean_pct=77.8, cum2_min_pct=120.0)


class TestCalibrate:
    def test_lossless_targets_give_boundary_solution(self):
        result = calibrate("muscatine", "robotic", CalibrationTargets(100.0, 100.0))
        p = result.params
        assert (p.f_suspend, p.w_transfer, p.r_rupture, p.e_release) == (1.0, 1.0, 1.0, 1.0)
        assert result.achieved.iter1_mean == 100.0

    def test_quick_calibration_hits_nearby_target(self):
        targets = CalibrationTargets(iter1_mean_pct=72.0, tolerance_pp=2.5)
        base = ProcessParams(resuspension_gamma=2.0, sample_jitter=0.0)
        result = calibrate(
            "nevada", "robotic", targets, base=base, seed=5,
            search_replicates=6, final_replicates=10,
        )
        assert abs(result.achieved.iter1_mean - 72.0) <= 2.5
        assert result.achieved.cum2_frac_ok >= 0.95
        assert result.required_capture2 == pytest.approx((94 - 72) / (100 - 72))

    def test_unreachable_target_reports_best_residual(self):
        targets = CalibrationTargets(iter1_mean_pct=5.0, tolerance_pp=0.5)
        base = ProcessParams(resuspension_gamma=2.0, sample_jitter=0.0)
        with pytest.raises(CalibrationError, match="best|unreachable|outside"):
            calibrate(
                "nevada", "robotic", targets, base=base, seed=5,
                search_replicates=4, final_replicates=6, f_bounds=(0.3, 0.9),
            )


class TestShippedParams:
    @pytest.mark.parametrize(
        "key,iter1",
        [
            ("muscatine_robotic", 77.8),
            ("muscatine_manual", 80.8),
            ("nevada_robotic", 66.8),
            ("nevada_manual", 73.0),
        ],
    )
    def test_shipped_params_meet_their_bounds(self, key, iter1):
        soil, method = key.rsplit("_", 1)
        targets = CalibrationTargets(iter1_mean_pct=iter1)
        result = evaluate_params(load_process_params(key), soil, method, targets, seed=321, replicates=24)
        assert abs(result.iter1_mean - iter1) <= 3.0
        required = required_second_iteration_capture(iter1, 94.0)
        assert result.capture2 >= required
