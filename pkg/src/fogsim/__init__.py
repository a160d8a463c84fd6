"""fogsim: photon-counting fiber-optic gyroscope simulator and analysis toolkit.

Models the click statistics of a single-photon Sagnac interferometer as a
function of inter-path delay, generates realistic count time series,
reproduces the two-stage sensor calibration, and evaluates delay stability
against the shot-noise Cramér-Rao bound via overlapping Allan deviation.
"""

__version__ = "0.1.0"

from .calibration import (
    CalibrationSet,
    ContrastPoint,
    FringeFit,
    FringeParams,
    LinearCalibration,
    alpha_from_inflection,
    combine_inflection,
    contrast_points_from_scan,
    delay_from_contrast,
    estimate_delays,
    fit_fringe,
    fit_linear_calibration,
    ideal_linear_calibration,
    normalize_counts,
)
from .config import ExperimentConfig, config_from_dict, default_config_dict, load_config
from .geometry import (
    GyroGeometry,
    delay_to_rotation,
    derived_geometry,
    figure_of_merit,
    rotation_to_delay,
)
from .model import (
    DelayEstimate,
    ModulatorMap,
    Spectrum,
    click_probabilities,
    cramer_rao_bound,
    delay_from_voltage,
    fisher_information,
    fisher_information_numeric,
    saturation,
)
from .simulate import (
    BrightScan,
    CalibrationScan,
    CountRecord,
    CountSeries,
    DriftModel,
    NoiseModel,
    RunConfig,
    overnight_drift,
    simulate_bright_scan,
    simulate_calibration_scan,
    simulate_run,
)
from .stability import (
    AllanCurve,
    CrbCurve,
    DelaySeries,
    SaturationCurve,
    StabilityReport,
    adjacent_average,
    crb_curve,
    default_m_grid,
    detection_limit,
    even_odd_split,
    make_stability_report,
    overlapping_allan_deviation,
    saturation_curve,
)

__all__ = [name for name in dir() if not name.startswith("_")]
