import numpy as np
import pytest

from fogsim import (
    CountSeries,
    DriftModel,
    FringeParams,
    ModulatorMap,
    NoiseModel,
    RunConfig,
    ideal_linear_calibration,
    overnight_drift,
    simulate_bright_scan,
    simulate_calibration_scan,
    simulate_run,
)
from fogsim._philox import block_uniforms, philox4x64
from fogsim.calibration import fit_fringe, normalize_count_arrays
from fogsim.errors import ParameterError

RATE = 631.6e3
TABLE1_CH1 = FringeParams(f0=482e-9, a=364e-9, w=7.84, v0i=3.85)
TABLE1_CH2 = FringeParams(f0=334e-9, a=327e-9, w=7.79, v0i=3.93)


def quiet_noise():
    return NoiseModel()


class TestPhilox:
    def test_matches_numpy_with_counter_offset(self, rng):
        """numpy's Philox increments the counter before producing a block, so
        its output at counter c equals ours at c + 1 (with carry)."""
        for _ in range(20):
            key = rng.integers(0, 2**64, size=2, dtype=np.uint64)
            counter = rng.integers(0, 2**64, size=4, dtype=np.uint64)
            reference = np.random.Philox(key=key, counter=counter).random_raw(4)
            bumped = counter.copy()
            for word in range(4):
                bumped[word] = bumped[word] + np.uint64(1)
                if bumped[word] != 0:
                    break
            mine = philox4x64(key, bumped[None, :])[0]
            np.testing.assert_array_equal(mine, reference)

    def test_carry_across_words(self):
        key = np.array([123, 456], dtype=np.uint64)
        counter = np.array([2**64 - 1, 7, 0, 0], dtype=np.uint64)
        reference = np.random.Philox(key=key, counter=counter).random_raw(4)
        mine = philox4x64(key, np.array([[0, 8, 0, 0]], dtype=np.uint64))[0]
        np.testing.assert_array_equal(mine, reference)

    def test_uniforms_open_interval(self):
        u = block_uniforms(np.array([1, 2], dtype=np.uint64), np.arange(100_000))
        assert u.shape == (100_000, 4)
        assert u.min() > 0.0
        assert u.max() < 1.0
        assert abs(u.mean() - 0.5) < 5e-3


class TestSimulateRun:
    def test_zero_rate_zero_darks_all_zero(self, spectrum):
        config = RunConfig(rate_total=0.0, integration_time=1.0, duration=50.0,
                           tau0=1.294e-15, seed=3)
        series = simulate_run(config, spectrum, quiet_noise())
        assert np.all(series.c1 == 0)
        assert np.all(series.c2 == 0)

    def test_bin_count_and_times(self, spectrum):
        config = RunConfig(rate_total=1e3, integration_time=0.5, duration=10.0,
                           tau0=0.0, seed=3)
        series = simulate_run(config, spectrum, quiet_noise())
        assert len(series) == 20
        np.testing.assert_allclose(np.diff(series.t), 0.5)

    def test_mean_law_at_inflection(self, spectrum):
        """At p1 = p2 = 1/2 both channels average R*T/2 = 315800 counts."""
        config = RunConfig(rate_total=RATE, integration_time=1.0, duration=1e4,
                           tau0=spectrum.quarter_wave_delay, seed=11)
        series = simulate_run(config, spectrum, quiet_noise())
        mu = RATE * 0.5
        sigma_mean = np.sqrt(mu / len(series))
        assert abs(series.c1.mean() - mu) < 3 * sigma_mean
        assert abs(series.c2.mean() - mu) < 3 * sigma_mean

    def test_deterministic_and_parallel_invariant(self, spectrum):
        config = RunConfig(rate_total=RATE, integration_time=1.0, duration=2000.0,
                           tau0=1.294e-15, seed=17)
        noise = NoiseModel(dark_rate_1=25.0, dark_rate_2=25.0, pump_rel_sigma=0.01,
                           drift=overnight_drift())
        first = simulate_run(config, spectrum, noise)
        second = simulate_run(config, spectrum, noise)
        threaded = simulate_run(config, spectrum, noise, workers=4)
        assert first == second
        assert first == threaded

    def test_seed_changes_output(self, spectrum):
        base = RunConfig(rate_total=RATE, integration_time=1.0, duration=100.0,
                         tau0=1.294e-15, seed=1)
        other = RunConfig(rate_total=RATE, integration_time=1.0, duration=100.0,
                          tau0=1.294e-15, seed=2)
        assert simulate_run(base, spectrum, quiet_noise()) != \
            simulate_run(other, spectrum, quiet_noise())

    def test_pump_noise_cancels_in_contrast(self, spectrum):
        """Common-mode gain inflates raw variance but not the contrast."""
        config = RunConfig(rate_total=RATE, integration_time=1.0, duration=2e4,
                           tau0=spectrum.quarter_wave_delay, seed=5)
        series = simulate_run(config, spectrum,
                              NoiseModel(pump_rel_sigma=0.05))
        mu = RATE * 0.5
        assert series.c1.var() > 3.0 * mu  # far above Poisson variance
        x1 = series.c1 / (series.c1 + series.c2)
        p1 = 0.5 * (1 - np.exp(-0.5 * (spectrum.sigma_omega *
                                       config.tau0) ** 2)
                    * np.cos(spectrum.omega0 * config.tau0))
        sigma_x1_mean = np.sqrt(0.25 / (RATE * 1.0)) / np.sqrt(len(series))
        assert abs(x1.mean() - p1) < 4 * sigma_x1_mean

    def test_linear_drift_recovered_by_perfect_calibration(self, spectrum):
        drift_rate = 2e-21
        config = RunConfig(rate_total=RATE, integration_time=1.0, duration=1e4,
                           tau0=1.294e-15, seed=23)
        series = simulate_run(config, spectrum,
                              NoiseModel(drift=DriftModel(linear=drift_rate)))
        calib = ideal_linear_calibration(spectrum, config.tau0)
        _, dx, _, _ = normalize_count_arrays(series.c1, series.c2, (0, 0), 1.0)
        tau_hat = ((dx - calib.k2) / calib.k1) * 1e-15
        slope = np.polyfit(series.t, tau_hat, 1)[0]
        assert slope == pytest.approx(drift_rate, rel=0.05)

    def test_random_walk_reproducible(self, spectrum):
        noise = NoiseModel(drift=DriftModel(random_walk=1e-19))
        config = RunConfig(rate_total=RATE, integration_time=1.0, duration=500.0,
                           tau0=1.294e-15, seed=29)
        assert simulate_run(config, spectrum, noise) == \
            simulate_run(config, spectrum, noise)

    def test_invalid_config(self):
        with pytest.raises(ParameterError):
            RunConfig(rate_total=-1.0, integration_time=1.0, duration=10.0,
                      tau0=0.0, seed=1)
        with pytest.raises(ParameterError):
            RunConfig(rate_total=1e3, integration_time=1.0, duration=0.5,
                      tau0=0.0, seed=1)


class TestCountSeries:
    def test_validation(self):
        with pytest.raises(ParameterError):
            CountSeries(np.array([0.0, 1.0]), np.array([1, -2]),
                        np.array([1, 2]), 1.0)
        with pytest.raises(ParameterError):
            CountSeries(np.array([1.0, 0.0]), np.array([1, 2]),
                        np.array([1, 2]), 1.0)

    def test_record_access(self):
        series = CountSeries(np.array([0.0, 1.0]), np.array([3, 4]),
                             np.array([5, 6]), 1.0)
        assert series[1].c1 == 4
        assert [r.c2 for r in series] == [5, 6]


class TestBrightScan:
    def test_noiseless_value_at_own_inflection(self):
        # the sine term vanishes at the channel's inflection voltage
        scan = simulate_bright_scan((3.85, 16.0), 200, (TABLE1_CH1, TABLE1_CH2),
                                    0.0, seed=1)
        assert scan.power1[0] == pytest.approx(482e-9, rel=1e-12)

    def test_noiseless_round_trip_through_fit(self):
        scan = simulate_bright_scan((0.0, 16.0), 200, (TABLE1_CH1, TABLE1_CH2),
                                    0.0, seed=1)
        fit = fit_fringe(np.column_stack([scan.v0, scan.power1]), 1.0)
        for got, want in [(fit.f0, 482e-9), (fit.a, 364e-9),
                          (fit.w, 7.84), (fit.v0i, 3.85)]:
            assert got == pytest.approx(want, rel=1e-9)

    def test_span_of_two_w_covers_one_period(self):
        w = TABLE1_CH1.w
        scan = simulate_bright_scan((3.85, 3.85 + 2 * w), 101,
                                    (TABLE1_CH1, TABLE1_CH2), 0.0, seed=1)
        assert scan.power1[0] == pytest.approx(scan.power1[-1], rel=1e-9)

    def test_deterministic(self):
        a = simulate_bright_scan((0.0, 16.0), 50, (TABLE1_CH1, TABLE1_CH2),
                                 1e-9, seed=9)
        b = simulate_bright_scan((0.0, 16.0), 50, (TABLE1_CH1, TABLE1_CH2),
                                 1e-9, seed=9)
        np.testing.assert_array_equal(a.power1, b.power1)
        np.testing.assert_array_equal(a.power2, b.power2)

    def test_too_few_steps(self):
        with pytest.raises(ParameterError):
            simulate_bright_scan((0.0, 16.0), 1, (TABLE1_CH1, TABLE1_CH2),
                                 0.0, seed=1)


class TestCalibrationScan:
    @staticmethod
    def scan_config(seed=41, integration=0.1):
        return RunConfig(rate_total=RATE, integration_time=integration,
                         duration=100.0, tau0=1.294e-15, seed=seed)

    def test_protocol_record_count(self, spectrum):
        modulator = ModulatorMap.from_inflection(3.8596, 0.0095, spectrum)
        scan = simulate_calibration_scan(3.6, 4.4, 100, 10, self.scan_config(),
                                         spectrum, modulator, quiet_noise())
        assert len(scan) == 1000
        assert scan.n_steps == 100
        assert scan.repeats == 10

    def test_contrast_spread_matches_poisson(self, spectrum):
        """Per-step X1 scatter follows sqrt(p1 p2 / (R T)) on average."""
        modulator = ModulatorMap.from_inflection(3.8596, 0.0095, spectrum)
        scan = simulate_calibration_scan(3.6, 4.4, 100, 2, self.scan_config(),
                                         spectrum, modulator, quiet_noise())
        x1 = scan.c1 / (scan.c1 + scan.c2)
        measured_var = x1.var(axis=1, ddof=1).mean()
        p1, p2 = np.mean(x1), 1 - np.mean(x1)
        predicted = p1 * p2 / (RATE * 0.1)
        assert measured_var == pytest.approx(predicted, rel=0.5)

    def test_step_statistics_shapes(self, spectrum):
        modulator = ModulatorMap.from_inflection(3.8596, 0.0095, spectrum)
        scan = simulate_calibration_scan(3.6, 4.4, 10, 5, self.scan_config(),
                                         spectrum, modulator, quiet_noise())
        stats = scan.step_statistics()
        assert stats["c1_mean"].shape == (10,)
        assert np.all(stats["c1_std"] >= 0)

    def test_equal_bounds_rejected(self, spectrum):
        modulator = ModulatorMap.from_inflection(3.8596, 0.0095, spectrum)
        with pytest.raises(ParameterError):
            simulate_calibration_scan(3.6, 3.6, 100, 10, self.scan_config(),
                                      spectrum, modulator, quiet_noise())
