import numpy as np
import pytest

from fogsim import (
    CalibrationSet,
    CountSeries,
    DelaySeries,
    LinearCalibration,
    ModulatorMap,
    overlapping_allan_deviation,
)
from fogsim.calibration import FringeFit
from fogsim.errors import DataError
from fogsim.io_formats import (
    read_allan_curves,
    read_calibration_set,
    read_count_series,
    read_delay_series,
    write_allan_curves,
    write_calibration_set,
    write_count_series,
    write_delay_series,
)

# values with full 17-digit mantissas, subnormals and awkward decimals
NASTY = [0.1, 1.294e-15, 2.2250738585072014e-308, 1 / 3, 9.87654321098765432e17]


class TestCountSeriesRoundTrip:
    def test_bit_exact(self, tmp_path, rng):
        t = np.cumsum(rng.uniform(0.9, 1.1, size=200)) + 0.1
        series = CountSeries(t, rng.integers(0, 10**6, 200),
                             rng.integers(0, 10**6, 200), 1.0)
        path = tmp_path / "counts.csv"
        write_count_series(path, series)
        back = read_count_series(path, 1.0)
        assert back == series
        np.testing.assert_array_equal(back.t, series.t)

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,c1,c2\n0.0,1,2\n")
        with pytest.raises(DataError):
            read_count_series(path, 1.0)

    def test_malformed_value(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t_s,c1,c2\n0.0,one,2\n")
        with pytest.raises(DataError):
            read_count_series(path, 1.0)


class TestDelaySeriesRoundTrip:
    def test_bit_exact(self, tmp_path, rng):
        n = len(NASTY)
        t = np.arange(n, dtype=float)
        tau = np.array(NASTY)
        sigma = tau / 7.0
        flags = ["ok", "degenerate", "window", "ok", "ok"]
        path = tmp_path / "delays.csv"
        write_delay_series(path, t, tau, sigma, flags)
        t2, tau2, sigma2, flags2 = read_delay_series(path)
        np.testing.assert_array_equal(t2, t)
        np.testing.assert_array_equal(tau2, tau)
        np.testing.assert_array_equal(sigma2, sigma)
        assert flags2 == flags


class TestAllanCurveRoundTrip:
    def test_bit_exact(self, tmp_path, rng):
        series = DelaySeries(1.0, 1e-18 * rng.standard_normal(4000))
        curves = {"raw": overlapping_allan_deviation(series)}
        path = tmp_path / "allan.csv"
        write_allan_curves(path, curves)
        back = read_allan_curves(path)
        np.testing.assert_array_equal(back["raw"]["adev"], curves["raw"].adev)
        np.testing.assert_array_equal(back["raw"]["ci"], curves["raw"].ci)
        np.testing.assert_array_equal(back["raw"]["m"], curves["raw"].m)


class TestCalibrationSetRoundTrip:
    def test_bit_exact(self, tmp_path):
        fit = FringeFit(f0=482e-9, a=364e-9, w=7.84, v0i=3.85,
                        f0_err=1e-9, a_err=1e-9, w_err=0.04, v0i_err=0.01,
                        chi2=196.2345678901234, dof=196, n_iterations=4)
        calset = CalibrationSet(
            fringe_fits={"ch1": fit},
            v0i=3.8596, v0i_err=0.0095,
            modulator=ModulatorMap(alpha=3.3489e-16, v0i=3.8596,
                                   alpha_err=8.24e-19),
            linear=LinearCalibration(
                k1=1.0937, k2=-1.3432,
                covariance=((1.3e-5, -1.7e-5), (-1.7e-5, 2.4e-5)),
                tau_window=(1.2066e-15, 1.4747e-15),
                window_volt=(3.6, 4.4), chi2=98.3, dof=98),
            dark_rates=(25.0, 27.5),
        )
        path = tmp_path / "cal.json"
        write_calibration_set(path, calset)
        back = read_calibration_set(path)
        assert back.modulator.alpha == calset.modulator.alpha
        assert back.linear.k1 == calset.linear.k1
        assert back.linear.covariance == calset.linear.covariance
        assert back.linear.tau_window == calset.linear.tau_window
        assert back.fringe_fits["ch1"].v0i_err == fit.v0i_err
        assert back.dark_rates == calset.dark_rates

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "cal.json"
        path.write_text('{"schema_version": 99}')
        with pytest.raises(DataError):
            read_calibration_set(path)
