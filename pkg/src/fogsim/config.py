"""Experiment configuration: JSON schema, defaults and validation.

One nested JSON document drives the whole pipeline.  Missing keys fall back
to the default parameter set of the reference instrument (telecom-band,
2 km coil); unknown keys are rejected so typos cannot silently change a
run.  ``pump_rel_sigma`` defaults to 0.01, a modeling choice: the source's
pump instability is qualitative in origin and only its common-mode
character matters, since count normalization cancels it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .calibration import FringeParams
from .errors import ConfigError
from .geometry import GyroGeometry, derived_geometry
from .model import ModulatorMap, Spectrum
from .simulate import DriftModel, NoiseModel, RunConfig, overnight_drift

__all__ = ["ExperimentConfig", "AnalysisSettings", "BrightSourceSettings",
           "CalibrationProtocol", "default_config_dict", "load_config",
           "config_from_dict", "config_hash"]

SCHEMA_VERSION = 1


def default_config_dict() -> dict:
    """Built-in defaults mirroring the reference instrument parameters."""
    return {
        "schema_version": SCHEMA_VERSION,
        "spectrum": {
            "lambda0_m": 1550e-9,
            "sigma_omega": 0.25e12,
            "sigma_omega_is_angular": True,
        },
        "geometry": {
            "fiber_length_m": 2000.0,
            "coil_radius_m": 0.125,
            "refractive_index": 1.471,
            "serrodyne_rate_override_hz": 54795.0,
        },
        "modulator": {
            "v0i_volt": 3.8596,
            "v0i_err_volt": 0.0095,
            "alpha_s_per_v": None,
            "alpha_err_s_per_v": 0.0,
            "from_calibration": None,
        },
        "run": {
            "rate_total_hz": 631.6e3,
            "integration_time_s": 1.0,
            "duration_s": 7200.0,
            "v0_volt": 3.86,
            "tau0_s": None,
            "seed": 20250808,
        },
        "noise": {
            "dark_rate_1_hz": 25.0,
            "dark_rate_2_hz": 25.0,
            "pump_rel_sigma": 0.01,
            "drift": {
                "preset": "none",
                "linear_s_per_s": 0.0,
                "sine_amplitude_s": 0.0,
                "sine_period_s": 0.0,
                "random_walk_s_per_sqrt_s": 0.0,
            },
        },
        "analysis": {
            "points_per_decade": 29,
            "adjacent_average_window": 71,
        },
        "bright_source": {
            # ch2's scan is noisier by the same 3:1 ratio as the reference
            # instrument's per-channel inflection errors, so the weighted
            # combination reproduces its behavior.
            "power_noise_ch1_w": 1e-9,
            "power_noise_ch2_w": 3e-9,
            "scan_v_min": 0.0,
            "scan_v_max": 16.0,
            "scan_points": 200,
            "ch1": {"f0_w": 482e-9, "a_w": 364e-9, "w_volt": 7.84, "v0i_volt": 3.85},
            "ch2": {"f0_w": 334e-9, "a_w": 327e-9, "w_volt": 7.79, "v0i_volt": 3.93},
        },
        "calibration_protocol": {
            "v_a_volt": 3.6,
            "v_b_volt": 4.4,
            "n_steps": 100,
            "repeats": 10,
            "integration_time_s": 0.1,
            "error_mode": "sem",
        },
    }


def _merge_checked(defaults: dict, override: dict, path: str = "") -> dict:
    """Defaults overlaid with the user document; unknown keys are fatal."""
    merged = {}
    for key, default_value in defaults.items():
        if key not in override:
            merged[key] = default_value
            continue
        value = override[key]
        if isinstance(default_value, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}{key} must be an object, got {value!r}")
            merged[key] = _merge_checked(default_value, value, f"{path}{key}.")
        else:
            merged[key] = value
    unknown = set(override) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(path + k for k in unknown)}")
    return merged


def _require_number(value, where: str, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if not isinstance(value, (int, float)) or isinstance(value, bool) \
            or not math.isfinite(float(value)):
        raise ConfigError(f"{where} must be a finite number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class AnalysisSettings:
    points_per_decade: int
    adjacent_average_window: int


@dataclass(frozen=True)
class BrightSourceSettings:
    power_noise: tuple[float, float]
    scan_v_min: float
    scan_v_max: float
    scan_points: int
    ch1: FringeParams
    ch2: FringeParams


@dataclass(frozen=True)
class CalibrationProtocol:
    v_a_volt: float
    v_b_volt: float
    n_steps: int
    repeats: int
    integration_time_s: float
    error_mode: str


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration with domain objects already constructed."""

    spectrum: Spectrum
    geometry: GyroGeometry
    serrodyne_rate_override: float | None
    modulator: ModulatorMap | None
    modulator_from_calibration: str | None
    run: RunConfig
    noise: NoiseModel
    analysis: AnalysisSettings
    bright_source: BrightSourceSettings
    protocol: CalibrationProtocol
    document: dict

    @property
    def hash(self) -> str:
        return config_hash(self.document)


def config_hash(document: dict) -> str:
    """SHA-256 of the canonical JSON rendering of a config document."""
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _build_drift(node: dict) -> DriftModel:
    preset = node.get("preset", "none")
    if preset == "overnight":
        return overnight_drift()
    if preset not in ("none", "custom"):
        raise ConfigError(f"unknown drift preset {preset!r}")
    if preset == "none":
        return DriftModel()
    return DriftModel(
        linear=_require_number(node["linear_s_per_s"], "drift.linear_s_per_s"),
        sine_amplitude=_require_number(node["sine_amplitude_s"], "drift.sine_amplitude_s"),
        sine_period=_require_number(node["sine_period_s"], "drift.sine_period_s"),
        random_walk=_require_number(node["random_walk_s_per_sqrt_s"],
                                    "drift.random_walk_s_per_sqrt_s"),
    )


def _fringe_params(node: dict, where: str) -> FringeParams:
    return FringeParams(
        f0=_require_number(node["f0_w"], f"{where}.f0_w"),
        a=_require_number(node["a_w"], f"{where}.a_w"),
        w=_require_number(node["w_volt"], f"{where}.w_volt"),
        v0i=_require_number(node["v0i_volt"], f"{where}.v0i_volt"),
    )


def config_from_dict(user: dict | None = None) -> ExperimentConfig:
    """Validate a config document (or None for pure defaults) and construct it."""
    document = _merge_checked(default_config_dict(), user or {})
    if document["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {document['schema_version']!r}; "
            f"this build reads version {SCHEMA_VERSION}")

    spec_node = document["spectrum"]
    sigma_omega = _require_number(spec_node["sigma_omega"], "spectrum.sigma_omega")
    if not spec_node["sigma_omega_is_angular"]:
        sigma_omega *= 2.0 * math.pi
    try:
        spectrum = Spectrum.from_wavelength(
            _require_number(spec_node["lambda0_m"], "spectrum.lambda0_m"), sigma_omega)

        geo_node = document["geometry"]
        geometry = derived_geometry(
            _require_number(geo_node["fiber_length_m"], "geometry.fiber_length_m"),
            _require_number(geo_node["coil_radius_m"], "geometry.coil_radius_m"),
            _require_number(geo_node["refractive_index"], "geometry.refractive_index"),
        )
        serrodyne_override = _require_number(
            geo_node["serrodyne_rate_override_hz"],
            "geometry.serrodyne_rate_override_hz", allow_none=True)

        mod_node = document["modulator"]
        from_calibration = mod_node["from_calibration"]
        modulator = None
        if from_calibration is None:
            alpha = _require_number(mod_node["alpha_s_per_v"],
                                    "modulator.alpha_s_per_v", allow_none=True)
            v0i = _require_number(mod_node["v0i_volt"], "modulator.v0i_volt")
            if alpha is None:
                modulator = ModulatorMap.from_inflection(
                    v0i, _require_number(mod_node["v0i_err_volt"],
                                         "modulator.v0i_err_volt"), spectrum)
            else:
                modulator = ModulatorMap(
                    alpha=alpha, v0i=v0i,
                    alpha_err=_require_number(mod_node["alpha_err_s_per_v"],
                                              "modulator.alpha_err_s_per_v"))
                modulator.check_consistency(spectrum)

        run_node = document["run"]
        tau0 = _require_number(run_node["tau0_s"], "run.tau0_s", allow_none=True)
        if tau0 is None:
            if modulator is None:
                raise ConfigError(
                    "run.tau0_s is required when the modulator comes from a "
                    "calibration file")
            tau0 = modulator.alpha * _require_number(run_node["v0_volt"], "run.v0_volt")
        run = RunConfig(
            rate_total=_require_number(run_node["rate_total_hz"], "run.rate_total_hz"),
            integration_time=_require_number(run_node["integration_time_s"],
                                             "run.integration_time_s"),
            duration=_require_number(run_node["duration_s"], "run.duration_s"),
            tau0=tau0,
            seed=int(run_node["seed"]),
        )

        noise_node = document["noise"]
        noise = NoiseModel(
            dark_rate_1=_require_number(noise_node["dark_rate_1_hz"], "noise.dark_rate_1_hz"),
            dark_rate_2=_require_number(noise_node["dark_rate_2_hz"], "noise.dark_rate_2_hz"),
            pump_rel_sigma=_require_number(noise_node["pump_rel_sigma"],
                                           "noise.pump_rel_sigma"),
            drift=_build_drift(noise_node["drift"]),
        )
        analysis_node = document["analysis"]
        analysis = AnalysisSettings(
            points_per_decade=int(analysis_node["points_per_decade"]),
            adjacent_average_window=int(analysis_node["adjacent_average_window"]),
        )
        bright_node = document["bright_source"]
        bright = BrightSourceSettings(
            power_noise=(
                _require_number(bright_node["power_noise_ch1_w"],
                                "bright_source.power_noise_ch1_w"),
                _require_number(bright_node["power_noise_ch2_w"],
                                "bright_source.power_noise_ch2_w"),
            ),
            scan_v_min=_require_number(bright_node["scan_v_min"],
                                       "bright_source.scan_v_min"),
            scan_v_max=_require_number(bright_node["scan_v_max"],
                                       "bright_source.scan_v_max"),
            scan_points=int(bright_node["scan_points"]),
            ch1=_fringe_params(bright_node["ch1"], "bright_source.ch1"),
            ch2=_fringe_params(bright_node["ch2"], "bright_source.ch2"),
        )
        proto_node = document["calibration_protocol"]
        protocol = CalibrationProtocol(
            v_a_volt=_require_number(proto_node["v_a_volt"],
                                     "calibration_protocol.v_a_volt"),
            v_b_volt=_require_number(proto_node["v_b_volt"],
                                     "calibration_protocol.v_b_volt"),
            n_steps=int(proto_node["n_steps"]),
            repeats=int(proto_node["repeats"]),
            integration_time_s=_require_number(
                proto_node["integration_time_s"],
                "calibration_protocol.integration_time_s"),
            error_mode=str(proto_node["error_mode"]),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc

    return ExperimentConfig(
        spectrum=spectrum,
        geometry=geometry,
        serrodyne_rate_override=serrodyne_override,
        modulator=modulator,
        modulator_from_calibration=from_calibration,
        run=run,
        noise=noise,
        analysis=analysis,
        bright_source=bright,
        protocol=protocol,
        document=document,
    )


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load and validate a JSON config file; None gives the defaults."""
    if path is None:
        return config_from_dict(None)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"config {path} must contain a JSON object")
    return config_from_dict(user)
