import math

import numpy as np
import pytest

from fogsim import (
    AllanCurve,
    CrbCurve,
    DelaySeries,
    adjacent_average,
    crb_curve,
    default_m_grid,
    detection_limit,
    even_odd_split,
    make_stability_report,
    overlapping_allan_deviation,
    saturation_curve,
)
from fogsim.errors import ParameterError


def oadev_brute_force(x: np.ndarray, m: int) -> float:
    """Direct double-loop transcription of the overlapping Allan variance."""
    n = len(x) - 2 * m + 1
    total = 0.0
    for j in range(n):
        inner = float(np.sum(x[j + m:j + 2 * m] - x[j:j + m]))
        total += inner * inner
    return math.sqrt(total / (2.0 * m * m * n))


class TestOverlappingAllanDeviation:
    def test_prefix_sum_equals_brute_force(self, rng):
        for _ in range(50):
            n = int(rng.integers(16, 2001))
            # random scale and offset probe the cancellation behavior
            x = rng.standard_normal(n) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
            series = DelaySeries(1.0, x)
            m_values = [m for m in (1, 2, 3, 7, 19, 53, 211, (n - 1) // 2)
                        if 1 <= m <= (n - 1) // 2]
            curve = overlapping_allan_deviation(series, np.unique(m_values))
            for m, adev in zip(curve.m, curve.adev):
                assert adev == pytest.approx(oadev_brute_force(x, int(m)), rel=1e-12)

    def test_constant_series_zero(self):
        series = DelaySeries(1.0, np.full(1000, 3.7e-15))
        curve = overlapping_allan_deviation(series, np.array([1, 5, 50]))
        np.testing.assert_allclose(curve.adev, 0.0, atol=1e-30)

    def test_white_noise_level(self, rng):
        x = rng.standard_normal(100_000)
        curve = overlapping_allan_deviation(DelaySeries(1.0, x), np.array([1]))
        assert curve.adev[0] == pytest.approx(1.0, rel=2e-2)

    def test_linear_drift_closed_form(self):
        c, t0 = 3.086e-22, 1.0
        x = c * t0 * np.arange(20_000)
        series = DelaySeries(t0, x)
        curve = overlapping_allan_deviation(series, np.array([1, 10, 100, 5000]))
        expected = c * curve.t / math.sqrt(2.0)
        np.testing.assert_allclose(curve.adev, expected, rtol=1e-9)

    def test_slope_classification(self, rng):
        """log-log slope: -1/2 on white noise, +1 on linear drift."""
        grid = np.unique(np.round(10 ** np.linspace(0, 1, 12)).astype(int))
        white = overlapping_allan_deviation(
            DelaySeries(1.0, rng.standard_normal(100_000)), grid)
        slope = np.polyfit(np.log(white.t), np.log(white.adev), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.05)
        drift = overlapping_allan_deviation(
            DelaySeries(1.0, 1e-20 * np.arange(100_000)), grid)
        slope = np.polyfit(np.log(drift.t), np.log(drift.adev), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.01)

    def test_n_terms_bookkeeping(self, rng):
        n = 500
        curve = overlapping_allan_deviation(
            DelaySeries(2.0, rng.standard_normal(n)))
        np.testing.assert_array_equal(curve.n_terms, n - 2 * curve.m + 1)
        np.testing.assert_allclose(curve.t, 2.0 * curve.m)
        assert np.all(curve.ci == curve.adev / np.sqrt(curve.n_terms))

    def test_m_out_of_range(self, rng):
        series = DelaySeries(1.0, rng.standard_normal(100))
        with pytest.raises(ParameterError):
            overlapping_allan_deviation(series, np.array([0, 1]))
        with pytest.raises(ParameterError):
            overlapping_allan_deviation(series, np.array([1, 50]))

    def test_workers_equivalent(self, rng):
        series = DelaySeries(1.0, rng.standard_normal(5000))
        a = overlapping_allan_deviation(series, workers=1)
        b = overlapping_allan_deviation(series, workers=4)
        np.testing.assert_array_equal(a.adev, b.adev)


class TestDefaultMGrid:
    def test_caps_and_dedupes(self):
        grid = default_m_grid(101)
        assert grid[0] == 1
        assert grid[-1] <= 50
        assert np.all(np.diff(grid) > 0)

    def test_density(self):
        grid = default_m_grid(100_000)
        per_decade = np.sum((grid >= 100) & (grid < 1000))
        assert 25 <= per_decade <= 30


class TestEvenOddSplit:
    def test_four_element_example(self):
        series = DelaySeries(1.0, np.array([1.0, 2.0, 3.0, 4.0]))
        even, odd, diff = even_odd_split(series)
        np.testing.assert_array_equal(even.values, [1.0, 3.0])
        np.testing.assert_array_equal(odd.values, [2.0, 4.0])
        np.testing.assert_array_equal(diff.values, [-1.0, -1.0])
        assert even.t0 == odd.t0 == diff.t0 == 2.0
        assert (even.origin, odd.origin, diff.origin) == ("even", "odd", "differential")

    def test_merge_reconstructs(self, rng):
        x = rng.standard_normal(1001)
        even, odd, _ = even_odd_split(DelaySeries(1.0, x))
        merged = np.empty(len(x))
        merged[0::2] = even.values
        merged[1::2] = odd.values
        np.testing.assert_array_equal(merged, x)

    def test_linear_drift_cancels_in_difference(self):
        c = 7.7e-22
        x = c * np.arange(30_000)
        _, _, diff = even_odd_split(DelaySeries(1.0, x))
        slope = np.polyfit(np.arange(len(diff.values)), diff.values, 1)[0]
        assert abs(slope) <= 1e-12 * c
        np.testing.assert_allclose(diff.values, -c, rtol=1e-9)

    def test_white_noise_difference_level(self, rng):
        x = rng.standard_normal(100_000)
        even, _, diff = even_odd_split(DelaySeries(1.0, x))
        grid = np.array([1, 2, 4])
        adev_even = overlapping_allan_deviation(even, grid).adev
        adev_diff = overlapping_allan_deviation(diff, grid).adev
        np.testing.assert_allclose(adev_diff / math.sqrt(2.0), adev_even, rtol=5e-2)

    def test_too_short(self):
        with pytest.raises(ParameterError):
            even_odd_split(DelaySeries(1.0, np.array([1.0, 2.0, 3.0])))


class TestDifferentialImmunity:
    def test_common_signal_leaves_difference_unchanged(self, rng):
        """A slow common-mode signal moves adev(raw) arbitrarily but shifts
        adev(diff) by well under 1%."""
        n = 100_000
        x = rng.standard_normal(n)
        slow = 50.0 * np.sin(2 * np.pi * np.arange(n) / 100_000.0)
        grid = np.array([1, 10, 100, 1000])
        base_raw = overlapping_allan_deviation(DelaySeries(1.0, x), grid).adev
        pert_raw = overlapping_allan_deviation(DelaySeries(1.0, x + slow), grid).adev
        assert pert_raw[-1] / base_raw[-1] > 10
        _, _, diff_base = even_odd_split(DelaySeries(1.0, x))
        _, _, diff_pert = even_odd_split(DelaySeries(1.0, x + slow))
        adev_base = overlapping_allan_deviation(diff_base, grid).adev
        adev_pert = overlapping_allan_deviation(diff_pert, grid).adev
        np.testing.assert_allclose(adev_pert, adev_base, rtol=1e-2)


class TestAdjacentAverage:
    def test_window_one_is_identity(self, rng):
        series = DelaySeries(1.0, rng.standard_normal(100))
        assert adjacent_average(series, 1) is series

    def test_constant_unchanged(self):
        series = DelaySeries(1.0, np.full(500, 2.5))
        out = adjacent_average(series, 71)
        np.testing.assert_allclose(out.values, 2.5, rtol=1e-14)
        assert out.t0 == 1.0
        assert len(out) == 500 - 71 + 1

    def test_averaging_law(self, rng):
        x = rng.standard_normal(100_000)
        out = adjacent_average(DelaySeries(1.0, x), 71)
        assert out.values.std() == pytest.approx(1.0 / math.sqrt(71), rel=5e-2)

    def test_even_window_rejected(self, rng):
        series = DelaySeries(1.0, rng.standard_normal(100))
        with pytest.raises(ParameterError):
            adjacent_average(series, 72)


class TestDetectionLimit:
    def test_monotone_curve_ends_at_last_point(self, rng):
        x = rng.standard_normal(50_000)
        curve = overlapping_allan_deviation(DelaySeries(1.0, x),
                                            np.array([1, 4, 16, 64]))
        t_dl, sigma_dl = detection_limit(curve)
        assert t_dl == curve.t[-1]
        assert sigma_dl == curve.adev[-1]

    def test_v_shape_minimum_near_crossover(self, rng):
        """White noise plus linear drift: the minimum sits near the analytic
        optimum t* = (sigma / (c t0))^(2/3) t0 (the equal-contribution
        crossover lies a factor 2^(1/3) above it)."""
        sigma, c = 1.0, 1e-3
        n = 200_000
        x = sigma * rng.standard_normal(n) + c * np.arange(n)
        curve = overlapping_allan_deviation(DelaySeries(1.0, x),
                                            default_m_grid(n, 40))
        t_dl, _ = detection_limit(curve)
        t_opt = (sigma / c) ** (2.0 / 3.0)
        assert t_opt / 1.6 <= t_dl <= t_opt * 1.6
        assert curve.t[0] < t_dl < curve.t[-1]

    def test_tie_breaks_to_smaller_t(self):
        curve = AllanCurve(m=np.array([1, 2, 4]), t=np.array([1.0, 2.0, 4.0]),
                           adev=np.array([3.0, 1.0, 1.0]),
                           ci=np.array([0.1, 0.1, 0.1]),
                           n_terms=np.array([100 - 2 + 1, 100 - 4 + 1, 100 - 8 + 1]),
                           n_samples=100, t0=1.0)
        assert detection_limit(curve) == (2.0, 1.0)


class TestDriftedRunDetectionLimit:
    def test_overnight_preset_floor_in_reference_bracket(self, spectrum):
        """With the overnight drift preset the even-series Allan curve turns
        up early: a local minimum of 150-400 zs appears at t in [30, 150] s.
        (The idealized single-frequency pump term also has transfer nulls at
        multiples of its period, which the broadband noise of a real source
        would not; the global minimum can live in such a null.)"""
        from fogsim import (CalibrationSet, ModulatorMap, NoiseModel, RunConfig,
                            estimate_delays, ideal_linear_calibration,
                            overnight_drift, simulate_run)
        modulator = ModulatorMap.from_inflection(3.8596, 0.0095, spectrum)
        tau0 = modulator.alpha * 3.86
        calset = CalibrationSet(fringe_fits={}, v0i=3.8596, v0i_err=0.0095,
                                modulator=modulator,
                                linear=ideal_linear_calibration(spectrum, tau0),
                                dark_rates=(25.0, 25.0))
        config = RunConfig(rate_total=631.6e3, integration_time=1.0,
                           duration=9 * 3600.0, tau0=tau0, seed=7001)
        noise = NoiseModel(dark_rate_1=25.0, dark_rate_2=25.0,
                           pump_rel_sigma=0.01, drift=overnight_drift())
        series = simulate_run(config, spectrum, noise, workers=2)
        tau, _, _ = estimate_delays(series, calset)
        even, _, _ = even_odd_split(DelaySeries(1.0, tau, "raw"))
        curve = overlapping_allan_deviation(even)
        a = curve.adev
        local_min = np.zeros(len(a), dtype=bool)
        local_min[1:-1] = (a[1:-1] < a[:-2]) & (a[1:-1] <= a[2:])
        in_bracket = local_min & (curve.t >= 30.0) & (curve.t <= 150.0) \
            & (a >= 150e-21) & (a <= 400e-21)
        assert in_bracket.any()


class TestCrbCurve:
    def test_reference_point(self, spectrum):
        curve = crb_curve(631.6e3, 2.0, spectrum, [72.0])
        assert curve.sigma[0] == pytest.approx(1.7e-19, rel=2.5e-2)

    def test_time_scaling(self, spectrum):
        curve = crb_curve(631.6e3, 2.0, spectrum, [10.0, 40.0])
        assert curve.sigma[0] == pytest.approx(2 * curve.sigma[1], rel=1e-12)

    def test_rate_scaling(self, spectrum):
        slow = crb_curve(631.6e3, 2.0, spectrum, [72.0]).sigma[0]
        fast = crb_curve(2 * 631.6e3, 2.0, spectrum, [72.0]).sigma[0]
        assert fast == pytest.approx(slow / math.sqrt(2), rel=1e-12)

    def test_domain(self, spectrum):
        with pytest.raises(ParameterError):
            crb_curve(0.0, 2.0, spectrum, [72.0])


class TestSaturationCurve:
    def test_equal_curves_give_unity(self, rng):
        x = rng.standard_normal(10_000)
        allan = overlapping_allan_deviation(DelaySeries(1.0, x))
        crb = CrbCurve(t=allan.t.copy(), sigma=allan.adev.copy())
        sat = saturation_curve(allan, crb)
        np.testing.assert_allclose(sat.value, 1.0, rtol=1e-14)

    def test_interpolation_in_log_t(self, rng):
        x = rng.standard_normal(10_000)
        allan = overlapping_allan_deviation(DelaySeries(1.0, x), np.array([2, 8]))
        crb = CrbCurve(t=np.array([1.0, 4.0, 16.0]), sigma=np.array([3.0, 2.0, 1.0]))
        sat = saturation_curve(allan, crb)
        # t = 2 and t = 8 sit midway between the reference nodes in log t
        assert sat.value[0] == pytest.approx(2.5 / allan.adev[0], rel=1e-12)
        assert sat.value[1] == pytest.approx(1.5 / allan.adev[1], rel=1e-12)

    def test_drift_dominated_saturation_decreases(self, spectrum):
        c = 1e-21
        x = c * np.arange(10_000) + 1e-19
        allan = overlapping_allan_deviation(DelaySeries(1.0, x),
                                            np.array([10, 100, 1000]))
        crb = crb_curve(631.6e3, 2.0, spectrum, allan.t)
        sat = saturation_curve(allan, crb)
        assert np.all(np.diff(sat.value) < 0)


class TestStabilityReport:
    def test_detection_limit_consistency(self, rng, spectrum):
        x = 1e-18 * rng.standard_normal(20_000)
        curve = overlapping_allan_deviation(DelaySeries(1.0, x))
        crb = crb_curve(631.6e3, 2.0, spectrum, curve.t)
        report = make_stability_report(curve, crb, total_area=125.0)
        assert report.detection_limit[1] == curve.adev.min()
        assert report.figure_of_merit == pytest.approx(
            curve.adev.min() / 1.25e-4, rel=1e-12)


class TestDelaySeries:
    def test_drop_nonfinite(self):
        values = np.array([1.0, np.nan, 2.0, np.inf, 3.0])
        series, dropped = DelaySeries(1.0, values).drop_nonfinite()
        assert dropped == 2
        np.testing.assert_array_equal(series.values, [1.0, 2.0, 3.0])

    def test_validation(self):
        with pytest.raises(ParameterError):
            DelaySeries(0.0, np.array([1.0, 2.0]))
        with pytest.raises(ParameterError):
            DelaySeries(1.0, np.array([1.0]))
        with pytest.raises(ParameterError):
            DelaySeries(1.0, np.array([1.0, 2.0]), origin="weird")
