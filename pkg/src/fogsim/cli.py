"""Command-line front end tying the pipeline together.

Subcommands: fisher, simulate, calibrate, estimate, stability.  Exit codes:
0 success, 2 usage or configuration error, 3 data or fit error.  With
--json-errors failures are also emitted as a machine-readable JSON object
on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (CalibrationSet, combine_inflection, contrast_points_from_scan,
                          estimate_delays, fit_fringe, fit_linear_calibration)
from .config import ExperimentConfig, config_from_dict, load_config
from .constants import EARTH_RATE_RAD_PER_S, rad_per_s_to_deg_per_hour
from .errors import ConfigError, DataError, FitError, FogsimError, ParameterError
from .geometry import delay_to_rotation, figure_of_merit, rotation_to_delay
from .io_formats import (RunManifest, file_digest, read_bright_scan,
                         read_calibration_scan, read_calibration_set, read_count_series,
                         read_delay_series, write_allan_curves, write_bright_scan,
                         write_calibration_scan, write_calibration_set,
                         write_count_series, write_delay_series, write_manifest,
                         write_report)
from .model import ModulatorMap, fisher_information
from .simulate import (RNG_ALGORITHM, RunConfig, simulate_bright_scan,
                       simulate_calibration_scan, simulate_run)
from .stability import (CrbCurve, DelaySeries, crb_curve, default_m_grid,
                        detection_limit, even_odd_split,
                        overlapping_allan_deviation, saturation_curve)

_USAGE_EXIT = 2
_DATA_EXIT = 3


def _out_path(args, name: str) -> Path:
    path = Path(name)
    if not path.is_absolute() and args.out_dir:
        path = Path(args.out_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        doc = json.loads(json.dumps(config.document))
        doc["run"]["seed"] = args.seed
        config = config_from_dict(doc)
    return config


def _manifest(config: ExperimentConfig, inputs: dict[str, Path],
              outputs: dict[str, Path]) -> RunManifest:
    return RunManifest(
        config_hash=config.hash,
        seed=config.run.seed,
        tool_version=__version__,
        rng_algorithm=RNG_ALGORITHM,
        inputs={k: file_digest(v) for k, v in inputs.items()},
        outputs={k: file_digest(v) for k, v in outputs.items()},
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_fisher(args) -> int:
    config = _load_config(args)
    if args.n_points < 1:
        raise ParameterError(f"n-points must be >= 1, got {args.n_points}")
    if args.tau_min < 0 or not math.isfinite(args.tau_min):
        raise ParameterError(f"tau-min must be >= 0, got {args.tau_min}")
    if args.n_points == 1:
        grid = np.array([args.tau_min])
    else:
        if not args.tau_max > args.tau_min:
            raise ParameterError("tau-max must exceed tau-min")
        grid = np.linspace(args.tau_min, args.tau_max, args.n_points)
    values = fisher_information(grid, config.spectrum)
    out = _out_path(args, args.out)
    with open(out, "w", newline="\n") as fh:
        fh.write("tau_s,fisher_s^-2\n")
        for tau, f in zip(grid, np.atleast_1d(values)):
            fh.write(f"{float(tau)!r},{float(f)!r}\n")
    print(f"wrote {out} ({len(grid)} points)")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    run = config.run
    if args.duration is not None:
        run = RunConfig(rate_total=run.rate_total,
                        integration_time=run.integration_time,
                        duration=args.duration, tau0=run.tau0, seed=run.seed)
    series = simulate_run(run, config.spectrum, config.noise, workers=args.workers)
    out = _out_path(args, args.out)
    write_count_series(out, series)
    manifest_path = Path(str(out) + ".manifest.json")
    write_manifest(manifest_path, _manifest(config, {}, {out.name: out}))
    print(f"wrote {out} ({len(series)} bins) and {manifest_path}")
    return 0


def _fit_channels(bright, sigmas: tuple[float, float], channels: tuple[str, ...]):
    fits = {}
    for name in channels:
        index = 0 if name == "ch1" else 1
        power = bright.channel(index + 1)
        sigma = sigmas[index]
        try:
            fits[name] = fit_fringe(np.column_stack([bright.v0, power]),
                                    sigma if sigma > 0 else 1.0)
        except FitError as exc:
            raise FitError(f"fringe fit failed on {name}: {exc}",
                           dict(exc.diagnostics, channel=name)) from exc
    return fits


def _cmd_calibrate(args) -> int:
    config = _load_config(args)
    inputs: dict[str, Path] = {}
    protocol = config.protocol
    bright_cfg = config.bright_source

    if args.bright is not None:
        bright = read_bright_scan(args.bright)
        inputs["bright_scan"] = Path(args.bright)
    elif args.simulate_bright:
        bright = simulate_bright_scan(
            (bright_cfg.scan_v_min, bright_cfg.scan_v_max), bright_cfg.scan_points,
            (bright_cfg.ch1, bright_cfg.ch2), bright_cfg.power_noise,
            seed=config.run.seed)
        if args.keep_intermediate:
            path = _out_path(args, "bright_scan.csv")
            write_bright_scan(path, bright)
            inputs["bright_scan"] = path
    else:
        raise ParameterError("provide --bright PATH or --simulate-bright")

    channels = ("ch1", "ch2") if args.channels == "both" else (args.channels,)
    fits = _fit_channels(bright, bright_cfg.power_noise, channels)
    v0i, v0i_err = combine_inflection([(f.v0i, f.v0i_err) for f in fits.values()])
    modulator = ModulatorMap.from_inflection(v0i, v0i_err, config.spectrum)

    if args.counts is not None:
        scan = read_calibration_scan(args.counts, protocol.integration_time_s, modulator)
        inputs["calibration_scan"] = Path(args.counts)
    elif args.simulate_counts:
        scan_run = RunConfig(
            rate_total=config.run.rate_total,
            integration_time=protocol.integration_time_s,
            duration=protocol.integration_time_s * protocol.n_steps * protocol.repeats,
            tau0=config.run.tau0, seed=config.run.seed)
        scan = simulate_calibration_scan(
            protocol.v_a_volt, protocol.v_b_volt, protocol.n_steps, protocol.repeats,
            scan_run, config.spectrum, modulator, config.noise, workers=args.workers)
        if args.keep_intermediate:
            path = _out_path(args, "calibration_scan.csv")
            write_calibration_scan(path, scan)
            inputs["calibration_scan"] = path
    else:
        raise ParameterError("provide --counts PATH or --simulate-counts")

    dark = (config.noise.dark_rate_1, config.noise.dark_rate_2)
    points = contrast_points_from_scan(scan, dark, protocol.error_mode)
    linear = fit_linear_calibration(points, window_volt=(protocol.v_a_volt,
                                                         protocol.v_b_volt))
    calset = CalibrationSet(
        fringe_fits=fits, v0i=v0i, v0i_err=v0i_err,
        modulator=modulator, linear=linear, dark_rates=dark,
        extras={"error_mode": protocol.error_mode,
                "n_degenerate_steps": sum(p.degenerate for p in points)},
    )
    out = _out_path(args, args.out)
    write_calibration_set(out, calset)
    manifest_path = Path(str(out) + ".manifest.json")
    write_manifest(manifest_path, _manifest(config, inputs, {out.name: out}))
    print(f"wrote {out}: alpha = {modulator.alpha:.4e} s/V, "
          f"k1 = {linear.k1:.4f} /fs, k2 = {linear.k2:.4f}")
    return 0


def _cmd_estimate(args) -> int:
    config = _load_config(args)
    calset = read_calibration_set(args.calibration)
    series = read_count_series(args.counts, config.run.integration_time)
    tau, sigma, flags = estimate_delays(series, calset)
    out = _out_path(args, args.out)
    write_delay_series(out, series.t, tau, sigma, flags)
    manifest_path = Path(str(out) + ".manifest.json")
    write_manifest(manifest_path, _manifest(
        config,
        {"counts": Path(args.counts), "calibration": Path(args.calibration)},
        {out.name: out}))
    n_flagged = sum(1 for f in flags if f != "ok")
    print(f"wrote {out} ({len(tau)} bins, {n_flagged} flagged)")
    return 0


def _curve_json(curve) -> dict:
    return {"t_s": curve.t.tolist(), "value": curve.value.tolist()}


def _cmd_stability(args) -> int:
    config = _load_config(args)
    t, tau, _, flags = read_delay_series(args.delays)
    if len(tau) == 0:
        raise ParameterError(f"{args.delays}: no delay samples")
    # window flags are warning-grade; only degenerate bins are unusable
    keep = np.array([f != "degenerate" for f in flags]) & np.isfinite(tau)
    dropped = int((~keep).sum())
    tau_clean = tau[keep]
    if len(tau_clean) < 8:
        raise ParameterError(
            f"delay series too short after dropping {dropped} flagged bins "
            f"({len(tau_clean)} < 8)")
    t0 = float(np.median(np.diff(t))) if len(t) > 1 else config.run.integration_time

    raw = DelaySeries(t0, tau_clean, "raw")
    even, odd, diff = even_odd_split(raw)
    ppd = config.analysis.points_per_decade
    curves = {}
    for series in (raw, even, odd, diff):
        grid = default_m_grid(len(series), ppd)
        curves[series.origin] = overlapping_allan_deviation(series, grid,
                                                            workers=args.workers)

    rate = config.run.rate_total
    update_period = 2.0 * t0
    crb_even = crb_curve(rate, update_period, config.spectrum, curves["even"].t)
    crb_diff = crb_curve(rate, update_period, config.spectrum, curves["differential"].t)

    dls = {origin: detection_limit(curve) for origin, curve in curves.items()}
    dl_tau = min((dls["even"], dls["odd"]), key=lambda d: d[1])
    dl_diff = dls["differential"]

    sat_even = saturation_curve(curves["even"], crb_even)
    sat_odd = saturation_curve(curves["odd"], crb_even)
    sat_diff = saturation_curve(curves["differential"], crb_diff)
    sat_diff_sqrt2 = saturation_curve(
        curves["differential"],
        CrbCurve(t=crb_diff.t, sigma=crb_diff.sigma * math.sqrt(2.0)))

    area = config.geometry.total_area
    rotation_equivalent = rad_per_s_to_deg_per_hour(
        delay_to_rotation(dl_diff[1], area))
    earth_delay = rotation_to_delay(EARTH_RATE_RAD_PER_S, area)

    report = {
        "series": {"n_samples": int(len(tau_clean)), "t0_s": t0,
                   "dropped_bins": dropped},
        "detection_limit": {
            origin: {"t_s": dl[0], "sigma_s": dl[1]} for origin, dl in dls.items()
        },
        "detection_limit_tau": {"t_s": dl_tau[0], "sigma_s": dl_tau[1]},
        "detection_limit_differential": {"t_s": dl_diff[0], "sigma_s": dl_diff[1]},
        "detection_limit_differential_over_sqrt2_s": dl_diff[1] / math.sqrt(2.0),
        "crb": {"rate_total_hz": rate, "update_period_s": update_period,
                "formula": "sqrt(2/(omega0^2*R*t))"},
        "saturation": {
            "even": _curve_json(sat_even),
            "odd": _curve_json(sat_odd),
            "differential": _curve_json(sat_diff),
            "differential_vs_sqrt2_bound": _curve_json(sat_diff_sqrt2),
        },
        "figure_of_merit_s_per_km2": figure_of_merit(dl_tau[1], area),
        "equivalent_rotation_deg_per_h": rotation_equivalent,
        "earth_rate": {
            "rate_rad_per_s": EARTH_RATE_RAD_PER_S,
            "delay_s": earth_delay,
            "detectable_at_detection_limit": bool(earth_delay > dl_tau[1]),
        },
        "geometry": {
            "total_area_m2": area,
            "n_coils": config.geometry.n_coils,
            "serrodyne_rate_hz_computed": config.geometry.serrodyne_rate,
            "serrodyne_rate_hz_override": config.serrodyne_rate_override,
        },
    }

    allan_path = _out_path(args, args.out_prefix + "_allan.csv")
    report_path = _out_path(args, args.out_prefix + "_report.json")
    write_allan_curves(allan_path, curves)
    write_report(report_path, report)
    write_manifest(Path(str(report_path) + ".manifest.json"), _manifest(
        config, {"delays": Path(args.delays)},
        {allan_path.name: allan_path, report_path.name: report_path}))
    print(f"wrote {allan_path} and {report_path}; "
          f"DL(tau) = {dl_tau[1]:.3e} s at t = {dl_tau[0]:.0f} s")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fogsim",
        description="Photon-counting gyroscope simulator and stability analysis")
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--out-dir", help="directory for relative output paths")
    parser.add_argument("--json-errors", action="store_true",
                        help="emit errors as JSON on stderr")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker threads for bin generation / Allan analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fisher", help="tabulate the Fisher information curve")
    p.add_argument("--tau-min", type=float, default=0.0)
    p.add_argument("--tau-max", type=float, default=5000e-15)
    p.add_argument("--n-points", type=int, default=1001)
    p.add_argument("--out", default="fisher.csv")
    p.set_defaults(func=_cmd_fisher)

    p = sub.add_parser("simulate", help="generate a photon-count time series")
    p.add_argument("--duration", type=float, help="override run.duration_s")
    p.add_argument("--out", default="counts.csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="run the two-stage calibration")
    p.add_argument("--bright", help="bright-scan CSV")
    p.add_argument("--simulate-bright", action="store_true")
    p.add_argument("--counts", help="calibration-scan CSV")
    p.add_argument("--simulate-counts", action="store_true")
    p.add_argument("--channels", choices=["both", "ch1", "ch2"], default="both")
    p.add_argument("--keep-intermediate", action="store_true",
                   help="write simulated scans next to the output")
    p.add_argument("--out", default="calibration.json")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("estimate", help="convert counts to delay estimates")
    p.add_argument("--counts", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--out", default="delays.csv")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("stability", help="Allan analysis and detection limits")
    p.add_argument("--delays", required=True)
    p.add_argument("--out-prefix", default="stability")
    p.set_defaults(func=_cmd_stability)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        _report_error(args, exc)
        return _USAGE_EXIT
    except (FitError, DataError) as exc:
        _report_error(args, exc)
        return _DATA_EXIT
    except FogsimError as exc:
        _report_error(args, exc)
        return _DATA_EXIT


def _report_error(args, exc: Exception) -> None:
    if getattr(args, "json_errors", False):
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"fogsim: error: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
