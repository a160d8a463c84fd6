"""On-disk formats: CSV series, calibration JSON and run manifests.

CSV files carry a header row, dot-decimal floats rendered with shortest
round-trip precision, LF line endings and seconds as the only time unit.
JSON documents carry a schema_version field.  Reading back a written file
reproduces every floating value bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .calibration import CalibrationSet, FringeFit, LinearCalibration
from .errors import DataError
from .model import ModulatorMap
from .simulate import BrightScan, CalibrationScan, CountSeries
from .stability import AllanCurve

__all__ = [
    "RunManifest",
    "write_count_series", "read_count_series",
    "write_bright_scan", "read_bright_scan",
    "write_calibration_scan", "read_calibration_scan",
    "write_delay_series", "read_delay_series",
    "write_allan_curves", "read_allan_curves",
    "write_calibration_set", "read_calibration_set",
    "write_report", "write_manifest", "file_digest",
]

SCHEMA_VERSION = 1

COUNT_HEADER = "t_s,c1,c2"
BRIGHT_HEADER = "v0_volt,power1_w,power2_w"
CAL_SCAN_HEADER = "v0_volt,t_s,c1,c2"
DELAY_HEADER = "t_s,tau_s,sigma_tau_s,flag"
ALLAN_HEADER = "origin,m,t_s,adev_s,ci_s,n_terms"


def _f(x) -> str:
    """Shortest decimal that round-trips the float exactly."""
    return repr(float(x))


def _write_lines(path, header: str, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _read_table(path, header: str) -> list[list[str]]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0] != header:
        raise DataError(f"{path}: expected header {header!r}, got "
                        f"{lines[0]!r}" if lines else f"{path}: empty file")
    n_cols = header.count(",") + 1
    rows = [line.split(",") for line in lines[1:] if line]
    if any(len(r) != n_cols for r in rows):
        raise DataError(f"{path}: malformed row (expected {n_cols} columns)")
    return rows


class _parsing:
    """Context manager turning value-parsing failures into DataError."""

    def __init__(self, path):
        self.path = path

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None and issubclass(exc_type, ValueError):
            raise DataError(f"{self.path}: unparseable value: {exc}") from exc
        return False


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# count / power series
# ---------------------------------------------------------------------------

def write_count_series(path, series: CountSeries) -> None:
    _write_lines(path, COUNT_HEADER,
                 (f"{_f(t)},{c1},{c2}"
                  for t, c1, c2 in zip(series.t, series.c1, series.c2)))


def read_count_series(path, integration_time: float) -> CountSeries:
    rows = _read_table(path, COUNT_HEADER)
    if not rows:
        raise DataError(f"{path}: no data rows")
    with _parsing(path):
        t = np.array([float(r[0]) for r in rows])
        c1 = np.array([int(r[1]) for r in rows])
        c2 = np.array([int(r[2]) for r in rows])
    return CountSeries(t, c1, c2, integration_time)


def write_bright_scan(path, scan: BrightScan) -> None:
    _write_lines(path, BRIGHT_HEADER,
                 (f"{_f(v)},{_f(a)},{_f(b)}"
                  for v, a, b in zip(scan.v0, scan.power1, scan.power2)))


def read_bright_scan(path) -> BrightScan:
    rows = _read_table(path, BRIGHT_HEADER)
    if not rows:
        raise DataError(f"{path}: no data rows")
    with _parsing(path):
        data = np.array([[float(x) for x in r] for r in rows])
    return BrightScan(v0=data[:, 0], power1=data[:, 1], power2=data[:, 2])


def write_calibration_scan(path, scan: CalibrationScan) -> None:
    def rows():
        for step in scan.steps():
            for t, c1, c2 in zip(step.t, step.c1, step.c2):
                yield f"{_f(step.v0)},{_f(t)},{c1},{c2}"
    _write_lines(path, CAL_SCAN_HEADER, rows())


def read_calibration_scan(path, integration_time: float,
                          modulator: ModulatorMap) -> CalibrationScan:
    """Rebuild a grouped scan; repeats are consecutive rows sharing a voltage."""
    rows = _read_table(path, CAL_SCAN_HEADER)
    if not rows:
        raise DataError(f"{path}: no data rows")
    v_groups: list[float] = []
    grouped: list[list[list[float]]] = []
    with _parsing(path):
        for r in rows:
            v = float(r[0])
            if not v_groups or v != v_groups[-1]:
                v_groups.append(v)
                grouped.append([])
            grouped[-1].append([float(r[1]), int(r[2]), int(r[3])])
    repeats = len(grouped[0])
    if any(len(g) != repeats for g in grouped):
        raise DataError(f"{path}: unequal repeat counts across voltage steps")
    v0 = np.array(v_groups)
    block = np.array(grouped, dtype=np.float64)
    return CalibrationScan(
        v0=v0, tau_set=modulator.alpha * v0,
        t=block[:, :, 0], c1=block[:, :, 1].astype(np.int64),
        c2=block[:, :, 2].astype(np.int64),
        integration_time=integration_time,
    )


# ---------------------------------------------------------------------------
# delay series and Allan curves
# ---------------------------------------------------------------------------

def write_delay_series(path, t, tau, sigma_tau, flags) -> None:
    _write_lines(path, DELAY_HEADER,
                 (f"{_f(a)},{_f(b)},{_f(c)},{d}"
                  for a, b, c, d in zip(t, tau, sigma_tau, flags)))


def read_delay_series(path):
    """Returns (t, tau, sigma_tau, flags) arrays; flags is a list of str.

    An empty table is returned as empty arrays so length preconditions can
    surface as usage errors downstream.
    """
    rows = _read_table(path, DELAY_HEADER)
    with _parsing(path):
        t = np.array([float(r[0]) for r in rows])
        tau = np.array([float(r[1]) for r in rows])
        sigma = np.array([float(r[2]) for r in rows])
    flags = [r[3] for r in rows]
    return t, tau, sigma, flags


def write_allan_curves(path, curves: dict[str, AllanCurve]) -> None:
    def rows():
        for origin, curve in curves.items():
            for m, t, adev, ci, n in zip(curve.m, curve.t, curve.adev,
                                         curve.ci, curve.n_terms):
                yield f"{origin},{m},{_f(t)},{_f(adev)},{_f(ci)},{n}"
    _write_lines(path, ALLAN_HEADER, rows())


def read_allan_curves(path) -> dict[str, dict[str, np.ndarray]]:
    rows = _read_table(path, ALLAN_HEADER)
    out: dict[str, dict[str, list]] = {}
    for r in rows:
        entry = out.setdefault(r[0], {"m": [], "t": [], "adev": [], "ci": [], "n_terms": []})
        entry["m"].append(int(r[1]))
        entry["t"].append(float(r[2]))
        entry["adev"].append(float(r[3]))
        entry["ci"].append(float(r[4]))
        entry["n_terms"].append(int(r[5]))
    return {origin: {k: np.array(v) for k, v in entry.items()}
            for origin, entry in out.items()}


# ---------------------------------------------------------------------------
# calibration set JSON
# ---------------------------------------------------------------------------

def _fringe_to_dict(fit: FringeFit) -> dict:
    return {
        "f0_w": fit.f0, "a_w": fit.a, "w_volt": fit.w, "v0i_volt": fit.v0i,
        "f0_err_w": fit.f0_err, "a_err_w": fit.a_err,
        "w_err_volt": fit.w_err, "v0i_err_volt": fit.v0i_err,
        "chi2": fit.chi2, "dof": fit.dof, "n_iterations": fit.n_iterations,
    }


def _fringe_from_dict(d: dict) -> FringeFit:
    return FringeFit(
        f0=d["f0_w"], a=d["a_w"], w=d["w_volt"], v0i=d["v0i_volt"],
        f0_err=d["f0_err_w"], a_err=d["a_err_w"],
        w_err=d["w_err_volt"], v0i_err=d["v0i_err_volt"],
        chi2=d["chi2"], dof=d["dof"], n_iterations=d["n_iterations"],
    )


def write_calibration_set(path, calset: CalibrationSet) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "fringe_fits": {name: _fringe_to_dict(fit)
                        for name, fit in calset.fringe_fits.items()},
        "v0i_volt": calset.v0i,
        "v0i_err_volt": calset.v0i_err,
        "modulator": {
            "alpha_s_per_v": calset.modulator.alpha,
            "alpha_err_s_per_v": calset.modulator.alpha_err,
            "v0i_volt": calset.modulator.v0i,
        },
        "linear": {
            "k1_per_fs": calset.linear.k1,
            "k2": calset.linear.k2,
            "covariance": [list(row) for row in calset.linear.covariance],
            "tau_window_s": list(calset.linear.tau_window)
            if calset.linear.tau_window else None,
            "window_volt": list(calset.linear.window_volt)
            if calset.linear.window_volt else None,
            "chi2": calset.linear.chi2,
            "dof": calset.linear.dof,
        },
        "dark_rates_hz": list(calset.dark_rates),
        "extras": calset.extras,
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_calibration_set(path) -> CalibrationSet:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read calibration set {path}: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    linear = doc["linear"]
    return CalibrationSet(
        fringe_fits={name: _fringe_from_dict(d)
                     for name, d in doc["fringe_fits"].items()},
        v0i=doc["v0i_volt"],
        v0i_err=doc["v0i_err_volt"],
        modulator=ModulatorMap(
            alpha=doc["modulator"]["alpha_s_per_v"],
            v0i=doc["modulator"]["v0i_volt"],
            alpha_err=doc["modulator"]["alpha_err_s_per_v"],
        ),
        linear=LinearCalibration(
            k1=linear["k1_per_fs"], k2=linear["k2"],
            covariance=tuple(tuple(row) for row in linear["covariance"]),
            tau_window=tuple(linear["tau_window_s"]) if linear["tau_window_s"] else None,
            window_volt=tuple(linear["window_volt"]) if linear["window_volt"] else None,
            chi2=linear["chi2"], dof=linear["dof"],
        ),
        dark_rates=tuple(doc["dark_rates_hz"]),
        extras=doc.get("extras", {}),
    )


# ---------------------------------------------------------------------------
# reports and manifests
# ---------------------------------------------------------------------------

def write_report(path, report: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **report}
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


@dataclass
class RunManifest:
    """Reproducibility record: rerunning with the same config hash, seed and
    inputs must reproduce the same output digests (timestamps aside)."""

    config_hash: str
    seed: int
    tool_version: str
    rng_algorithm: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    created_utc: str = ""

    def __post_init__(self):
        if not self.created_utc:
            self.created_utc = datetime.now(timezone.utc).isoformat()


def write_manifest(path, manifest: RunManifest) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **asdict(manifest)}
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
