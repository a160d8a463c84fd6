"""Seeded Monte Carlo photon-count generator.

Produces count time series, bright-source fringe scans and stepped
calibration scans with Poisson shot noise, per-channel dark counts,
common-mode pump fluctuation and a configurable slow delay drift.

Every random quantity is an inverse-CDF transform of open-interval uniforms
drawn from a counter-based Philox4x64-10 stream keyed per bin, so output is
bit-identical for a given seed regardless of chunking or worker count, and
nearby parameter changes perturb rather than reshuffle a realization.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import poisson

from ._philox import RNG_ALGORITHM, block_uniforms, derive_keys
from .calibration import FringeParams
from .errors import ParameterError
from .model import ModulatorMap, Spectrum, click_probabilities

__all__ = [
    "CountRecord",
    "CountSeries",
    "DriftModel",
    "NoiseModel",
    "RunConfig",
    "BrightScan",
    "CalibrationStep",
    "CalibrationScan",
    "overnight_drift",
    "simulate_run",
    "simulate_bright_scan",
    "simulate_calibration_scan",
    "RNG_ALGORITHM",
]

_CHUNK = 16384


@dataclass(frozen=True)
class CountRecord:
    """Photon counts of both channels in one integration bin starting at t."""

    t: float
    c1: int
    c2: int


class CountSeries:
    """Column-oriented sequence of CountRecord with a common integration time."""

    def __init__(self, t: np.ndarray, c1: np.ndarray, c2: np.ndarray,
                 integration_time: float):
        self.t = np.asarray(t, dtype=np.float64)
        self.c1 = np.asarray(c1, dtype=np.int64)
        self.c2 = np.asarray(c2, dtype=np.int64)
        self.integration_time = float(integration_time)
        if not (len(self.t) == len(self.c1) == len(self.c2)):
            raise ParameterError("t, c1, c2 must have equal length")
        if np.any(self.c1 < 0) or np.any(self.c2 < 0):
            raise ParameterError("counts must be non-negative")
        if np.any(np.diff(self.t) < 0):
            raise ParameterError("bin times must be non-decreasing")
        if not self.integration_time > 0:
            raise ParameterError("integration_time must be positive")

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> CountRecord:
        return CountRecord(float(self.t[i]), int(self.c1[i]), int(self.c2[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        return (isinstance(other, CountSeries)
                and self.integration_time == other.integration_time
                and np.array_equal(self.t, other.t)
                and np.array_equal(self.c1, other.c1)
                and np.array_equal(self.c2, other.c2))


@dataclass(frozen=True)
class DriftModel:
    """Slow drift of the inter-path delay, as a sum of simple terms.

    linear: s/s; sine_amplitude: s with sine_period: s; random_walk:
    step scale in s per sqrt(s) (integrated with the bin spacing).
    """

    linear: float = 0.0
    sine_amplitude: float = 0.0
    sine_period: float = 0.0
    random_walk: float = 0.0

    def __post_init__(self):
        if self.sine_amplitude != 0.0 and not self.sine_period > 0.0:
            raise ParameterError("sine_period must be positive when sine_amplitude is set")
        if self.random_walk < 0.0:
            raise ParameterError("random_walk scale must be non-negative")

    def deterministic(self, t) -> np.ndarray:
        """Drift value at times t, excluding the random-walk term."""
        t = np.asarray(t, dtype=np.float64)
        out = self.linear * t
        if self.sine_amplitude != 0.0:
            out = out + self.sine_amplitude * np.sin(2.0 * np.pi * t / self.sine_period)
        return out


def overnight_drift() -> DriftModel:
    """Overnight drift preset: 10 as accumulated linearly over 9 h plus a
    1 as, 10-minute-period oscillation standing in for medium-term pump
    instability."""
    return DriftModel(linear=10e-18 / (9 * 3600.0),
                      sine_amplitude=1e-18, sine_period=600.0)


@dataclass(frozen=True)
class NoiseModel:
    """Detector and source noise: dark rates (Hz), relative 1-sigma of the
    common-mode pump multiplier per bin, and the slow delay drift."""

    dark_rate_1: float = 0.0
    dark_rate_2: float = 0.0
    pump_rel_sigma: float = 0.0
    drift: DriftModel = field(default_factory=DriftModel)

    def __post_init__(self):
        if self.dark_rate_1 < 0 or self.dark_rate_2 < 0:
            raise ParameterError("dark rates must be non-negative")
        if not 0.0 <= self.pump_rel_sigma <= 0.5:
            raise ParameterError("pump_rel_sigma must lie in [0, 0.5]")


@dataclass(frozen=True)
class RunConfig:
    """Acquisition parameters of a simulated counting run.

    rate_total: combined mean detected rate R, Hz; integration_time: bin
    length T, s; duration: total run length, s; tau0: set-point delay, s;
    seed: 64-bit reproducibility seed.
    """

    rate_total: float
    integration_time: float
    duration: float
    tau0: float
    seed: int

    def __post_init__(self):
        if self.rate_total < 0:
            raise ParameterError("rate_total must be non-negative")
        if not self.integration_time > 0:
            raise ParameterError("integration_time must be positive")
        if self.duration < self.integration_time:
            raise ParameterError("duration must cover at least one integration bin")
        if not math.isfinite(self.tau0):
            raise ParameterError("tau0 must be finite")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must fit in 64 bits")

    @property
    def n_bins(self) -> int:
        return int(math.floor(self.duration / self.integration_time + 1e-9))


def _delay_track(t: np.ndarray, tau0, noise: NoiseModel,
                 key_drift: np.ndarray, integration_time: float) -> np.ndarray:
    """Per-bin delay: set point plus deterministic drift plus random walk."""
    tau = np.asarray(tau0, dtype=np.float64) + noise.drift.deterministic(t)
    if noise.drift.random_walk > 0.0 and len(t) > 1:
        u = block_uniforms(key_drift, np.arange(len(t) - 1))
        steps = noise.drift.random_walk * math.sqrt(integration_time) * ndtri(u[:, 0])
        tau = tau + np.concatenate([[0.0], np.cumsum(steps)])
    return tau


def _draw_counts(indices: np.ndarray, key_counts: np.ndarray, p1: np.ndarray,
                 p2: np.ndarray, mean_total: float, dark_counts: tuple[float, float],
                 pump_rel_sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Counts for a slice of bins; a pure function of (key, bin index)."""
    u = block_uniforms(key_counts, indices)
    if pump_rel_sigma > 0.0:
        gain = np.maximum(1.0 + pump_rel_sigma * ndtri(u[:, 0]), 0.0)
    else:
        gain = 1.0
    lam1 = gain * mean_total * p1 + dark_counts[0]
    lam2 = gain * mean_total * p2 + dark_counts[1]
    c1 = poisson.ppf(u[:, 1], lam1).astype(np.int64)
    c2 = poisson.ppf(u[:, 2], lam2).astype(np.int64)
    return c1, c2


def _generate_counts(tau: np.ndarray, rate_total: float, integration_time: float,
                     noise: NoiseModel, key_counts: np.ndarray, spectrum: Spectrum,
                     workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    n = len(tau)
    p1, p2 = click_probabilities(tau, spectrum)
    p1 = np.atleast_1d(p1)
    p2 = np.atleast_1d(p2)
    mean_total = rate_total * integration_time
    dark_counts = (noise.dark_rate_1 * integration_time,
                   noise.dark_rate_2 * integration_time)
    c1 = np.empty(n, dtype=np.int64)
    c2 = np.empty(n, dtype=np.int64)
    slices = [slice(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]

    def fill(sl: slice) -> None:
        idx = np.arange(sl.start, sl.stop)
        c1[sl], c2[sl] = _draw_counts(idx, key_counts, p1[sl], p2[sl],
                                      mean_total, dark_counts, noise.pump_rel_sigma)

    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, slices))
    else:
        for sl in slices:
            fill(sl)
    return c1, c2


def simulate_run(config: RunConfig, spectrum: Spectrum, noise: NoiseModel,
                 workers: int = 1) -> CountSeries:
    """Simulate a counting run of floor(duration / T) bins.

    Bin k at t_k = k T sees delay tau0 + drift(t_k); both channels draw
    Poisson counts with mean g_k R T p_i + dark_i T, where g_k is the
    common-mode pump multiplier (clipped at zero).  Identical
    (config, spectrum, noise) give bit-identical output for any ``workers``.
    """
    key_counts, key_drift = derive_keys(config.seed, 2)
    t = np.arange(config.n_bins, dtype=np.float64) * config.integration_time
    tau = _delay_track(t, config.tau0, noise, key_drift, config.integration_time)
    c1, c2 = _generate_counts(tau, config.rate_total, config.integration_time,
                              noise, key_counts, spectrum, workers)
    return CountSeries(t, c1, c2, config.integration_time)


@dataclass(frozen=True)
class BrightScan:
    """Bright-source power scan: per-voltage optical power of both outputs."""

    v0: np.ndarray
    power1: np.ndarray
    power2: np.ndarray

    def channel(self, index: int) -> np.ndarray:
        return self.power1 if index == 1 else self.power2


def simulate_bright_scan(v_range: tuple[float, float], n_steps: int,
                         fringe: tuple[FringeParams, FringeParams],
                         power_noise_sigma, seed: int) -> BrightScan:
    """Sweep the modulator voltage under a bright source.

    power_i(v) = f0_i + a_i sin(pi (v - v0i_i) / w_i) plus Gaussian noise of
    the given sigma (W, scalar or one value per channel); deterministic
    under the seed.
    """
    if n_steps < 2:
        raise ParameterError(f"n_steps must be at least 2, got {n_steps}")
    sigmas = ((power_noise_sigma, power_noise_sigma)
              if np.isscalar(power_noise_sigma) else tuple(power_noise_sigma))
    if any(s < 0 for s in sigmas):
        raise ParameterError("power_noise_sigma must be non-negative")
    v0 = np.linspace(v_range[0], v_range[1], n_steps)
    key = derive_keys(seed, 1)[0]
    u = block_uniforms(key, np.arange(n_steps))
    powers = []
    for channel, params in enumerate(fringe):
        clean = params.evaluate(v0) if hasattr(params, "evaluate") \
            else FringeParams(params.f0, params.a, params.w, params.v0i).evaluate(v0)
        sigma = sigmas[channel]
        noise = sigma * ndtri(u[:, channel]) if sigma > 0 else 0.0
        powers.append(clean + noise)
    return BrightScan(v0=v0, power1=powers[0], power2=powers[1])


@dataclass(frozen=True)
class CalibrationStep:
    """All repeats acquired at one calibration voltage."""

    v0: float
    tau: float
    t: np.ndarray
    c1: np.ndarray
    c2: np.ndarray


class CalibrationScan:
    """Stepped calibration acquisition: n_steps voltages times `repeats` bins."""

    def __init__(self, v0: np.ndarray, tau_set: np.ndarray, t: np.ndarray,
                 c1: np.ndarray, c2: np.ndarray, integration_time: float):
        self.v0 = np.asarray(v0, dtype=np.float64)
        self.tau_set = np.asarray(tau_set, dtype=np.float64)
        self.t = np.asarray(t, dtype=np.float64)
        self.c1 = np.asarray(c1, dtype=np.int64)
        self.c2 = np.asarray(c2, dtype=np.int64)
        self.integration_time = float(integration_time)
        if self.t.shape != self.c1.shape or self.c1.shape != self.c2.shape:
            raise ParameterError("t, c1, c2 must have identical shapes")
        if self.t.shape[0] != len(self.v0):
            raise ParameterError("per-step arrays must match the voltage grid")

    @property
    def n_steps(self) -> int:
        return len(self.v0)

    @property
    def repeats(self) -> int:
        return self.t.shape[1]

    def __len__(self) -> int:
        return self.t.size

    def steps(self):
        for i in range(self.n_steps):
            yield CalibrationStep(float(self.v0[i]), float(self.tau_set[i]),
                                  self.t[i], self.c1[i], self.c2[i])

    def step_statistics(self) -> dict[str, np.ndarray]:
        """Per-step mean and standard deviation of the raw channel counts."""
        return {
            "c1_mean": self.c1.mean(axis=1),
            "c1_std": self.c1.std(axis=1, ddof=1),
            "c2_mean": self.c2.mean(axis=1),
            "c2_std": self.c2.std(axis=1, ddof=1),
        }


def simulate_calibration_scan(v_a: float, v_b: float, n_steps: int, repeats: int,
                              config: RunConfig, spectrum: Spectrum,
                              modulator: ModulatorMap, noise: NoiseModel,
                              workers: int = 1) -> CalibrationScan:
    """Step the voltage from v_a to v_b, acquiring `repeats` bins per step.

    Each step sets tau = alpha * v0 (plus any configured drift over the scan
    timeline); counting statistics and determinism match
    :func:`simulate_run`.
    """
    if not v_a < v_b:
        raise ParameterError(f"require v_a < v_b, got {v_a} >= {v_b}")
    if n_steps < 2:
        raise ParameterError(f"n_steps must be at least 2, got {n_steps}")
    if repeats < 2:
        raise ParameterError(f"repeats must be at least 2, got {repeats}")
    key_counts, key_drift = derive_keys(config.seed, 2)
    v0 = np.linspace(v_a, v_b, n_steps)
    tau_set = modulator.alpha * v0
    n_total = n_steps * repeats
    t_flat = np.arange(n_total, dtype=np.float64) * config.integration_time
    tau_flat = _delay_track(t_flat, np.repeat(tau_set, repeats), noise,
                            key_drift, config.integration_time)
    c1, c2 = _generate_counts(tau_flat, config.rate_total, config.integration_time,
                              noise, key_counts, spectrum, workers)
    shape = (n_steps, repeats)
    return CalibrationScan(v0, tau_set, t_flat.reshape(shape),
                           c1.reshape(shape), c2.reshape(shape),
                           config.integration_time)
