"""JSON experiment configuration.

One document carries the sounder (``sounding``), the synthetic scenario,
the estimator settings and the Monte Carlo experiment. Interface units are
degrees, nanoseconds, metres, GHz/MHz and dB; everything is converted to SI
radians/seconds/Hz on load. Phase statistics stay in radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from .geometry import RotatorGeometry, ScanGrid
from .sage.estimators import ESTIMATORS
from .sage.model import EstimatorConfig
from .synth import SoundingConfig
from .waveform import AntennaPattern, CorrelationKernel, FrequencyPlan, VnaKernel

SCHEMA_VERSION = 1

_range3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

_GRID = {
    "type": "object",
    "properties": {
        "az_deg": _range3,
        "el_deg": _range3,
        "angles_deg": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}},
        "az_step_deg": {"type": "number", "exclusiveMinimum": 0},
        "el_step_deg": {"type": "number", "exclusiveMinimum": 0},
    },
    "oneOf": [
        {"required": ["az_deg", "el_deg"]},
        {"required": ["angles_deg", "az_step_deg", "el_step_deg"]},
    ],
    "additionalProperties": False,
}

_PATTERN = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["gaussian", "isotropic", "tabulated"]},
        "hpbw_deg": {"type": "number", "exclusiveMinimum": 0},
        "hpbw_el_deg": {"type": "number", "exclusiveMinimum": 0},
        "boresight_gain_db": {"type": "number"},
        "csv": {"type": "string"},
        "az_deg": {"type": "array", "items": {"type": "number"}},
        "el_deg": {"type": "array", "items": {"type": "number"}},
        "gain_db": {"type": "array"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_SIDE = {
    "type": "object",
    "properties": {
        "grid": _GRID,
        "rotator": {
            "type": "object",
            "properties": {
                "horizontal_radius_m": {"type": "number", "minimum": 0},
                "vertical_radius_m": {"type": "number", "minimum": 0},
            },
            "required": ["horizontal_radius_m"],
            "additionalProperties": False,
        },
        "pattern": _PATTERN,
    },
    "required": ["grid"],
    "additionalProperties": False,
}

_KERNEL = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["vna", "correlation"]},
        "f_start_ghz": {"type": "number", "exclusiveMinimum": 0},
        "f_stop_ghz": {"type": "number", "exclusiveMinimum": 0},
        "delta_f_mhz": {"type": "number", "exclusiveMinimum": 0},
        "bandwidth_ghz": {"type": "number", "exclusiveMinimum": 0},
        "delay_step_ns": {"type": "number", "exclusiveMinimum": 0},
        "n_samples": {"type": "integer", "minimum": 2},
        "autocorrelation": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["kind"],
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "vna"}}},
            "then": {"required": ["f_start_ghz", "f_stop_ghz", "delta_f_mhz"]},
        },
        {
            "if": {"properties": {"kind": {"const": "correlation"}}},
            "then": {"required": ["delay_step_ns", "n_samples"], "anyOf": [{"required": ["bandwidth_ghz"]}, {"required": ["autocorrelation"]}]},
        },
    ],
    "additionalProperties": False,
}

_PATH = {
    "type": "object",
    "properties": {
        "gain_db": {"type": "number"},
        "delay_ns": {"type": "number", "minimum": 0},
        "az_deg": {"type": "number"},
        "el_deg": {"type": "number", "minimum": -90, "maximum": 90},
        "dist_m": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "dod_az_deg": {"type": "number"},
        "dod_el_deg": {"type": "number", "minimum": -90, "maximum": 90},
        "dod_dist_m": {"type": ["number", "null"], "exclusiveMinimum": 0},
    },
    "required": ["gain_db", "delay_ns", "az_deg", "el_deg"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "sounding": {
            "type": "object",
            "properties": {
                "rx": _SIDE,
                "tx": _SIDE,
                "kernel": _KERNEL,
                "carrier_ghz": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
            "required": ["rx", "kernel"],
            "additionalProperties": False,
        },
        "scenario": {
            "type": "object",
            "properties": {
                "distance_m": {"type": "number", "exclusiveMinimum": 0},
                "paths": {"type": "array", "items": _PATH, "minItems": 1},
                "snr_db": {"type": ["number", "null"]},
                "phase_mean_rad": {"type": "number"},
                "phase_sigma_rad": {"type": "number", "minimum": 0},
                "wavefront": {"enum": ["swf", "ffa"]},
            },
            "additionalProperties": False,
        },
        "estimator": {
            "type": "object",
            "properties": {
                "delay_step_ns": {"type": "number", "exclusiveMinimum": 0},
                "angle_coarse_deg": {"type": "number", "exclusiveMinimum": 0},
                "angle_fine_deg": {"type": "number", "exclusiveMinimum": 0},
                "dist_coarse_m": {"type": "number", "exclusiveMinimum": 0},
                "dist_fine_m": {"type": "number", "exclusiveMinimum": 0},
                "dist_bounds_m": {"type": ["array", "null"], "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "dist_min_m": {"type": "number", "exclusiveMinimum": 0},
                "far_candidate": {"type": "boolean"},
                "delay_half_width": {"type": "integer", "minimum": 1},
                "angle_window_factor": {"type": "number", "exclusiveMinimum": 0},
                "threshold_mode": {"enum": ["relative", "friis", "absolute"]},
                "threshold_value": {"type": ["number", "null"]},
                "dynamic_range": {"type": "number", "exclusiveMinimum": 1},
                "convergence_ratio": {"type": "number", "exclusiveMinimum": 0},
                "max_cycles": {"type": "integer", "minimum": 1},
                "max_paths": {"type": "integer", "minimum": 1},
                "wavefront": {"enum": ["swf", "ffa"]},
                "accelerated": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "experiment": {
            "type": "object",
            "properties": {
                "estimators": {"type": "array", "items": {"enum": list(ESTIMATORS)}, "minItems": 1},
                "trials": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "sweep": {
                    "type": "object",
                    "properties": {
                        "var": {"enum": ["phase_sigma_rad", "distance_m", "snr_db", "hpbw_deg", "rotator_radius_m"]},
                        "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    },
                    "required": ["var", "values"],
                    "additionalProperties": False,
                },
                "out": {"type": "string"},
            },
            "additionalProperties": False,
        },
    },
    "required": ["schema_version", "sounding"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid configuration document."""


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def _grid_from(d: dict) -> ScanGrid:
    if "az_deg" in d:
        return ScanGrid.rectangular(*d["az_deg"], *d["el_deg"])
    return ScanGrid(np.radians(np.asarray(d["angles_deg"], float)), math.radians(d["az_step_deg"]), math.radians(d["el_step_deg"]))


def _grid_to(g: ScanGrid) -> dict:
    return {
        "angles_deg": np.degrees(g.angles).tolist(),
        "az_step_deg": math.degrees(g.azimuth_step),
        "el_step_deg": math.degrees(g.elevation_step),
    }


def _pattern_from(d: dict | None, base: Path | None) -> AntennaPattern:
    if d is None or d["kind"] == "isotropic":
        return AntennaPattern.isotropic(10 ** ((d or {}).get("boresight_gain_db", 0.0) / 10))
    if d["kind"] == "gaussian":
        if "hpbw_deg" not in d:
            raise ConfigError("gaussian pattern needs hpbw_deg")
        hp_el = d.get("hpbw_el_deg")
        return AntennaPattern.gaussian(
            math.radians(d["hpbw_deg"]),
            None if hp_el is None else math.radians(hp_el),
            10 ** (d.get("boresight_gain_db", 0.0) / 10),
        )
    if "csv" in d:
        p = Path(d["csv"])
        if base is not None and not p.is_absolute():
            p = base / p
        return AntennaPattern.from_csv(p)
    if not all(k in d for k in ("az_deg", "el_deg", "gain_db")):
        raise ConfigError("tabulated pattern needs csv or az_deg/el_deg/gain_db")
    return AntennaPattern.tabulated(d["az_deg"], d["el_deg"], d["gain_db"])


def _pattern_to(p: AntennaPattern) -> dict:
    if p.kind == "tabulated":
        return {"kind": "tabulated", "az_deg": list(map(float, p.table_az)), "el_deg": list(map(float, p.table_el)), "gain_db": np.asarray(p.table_db).tolist()}
    g_db = 10 * math.log10(p.boresight_gain)
    if not (math.isfinite(p.hpbw_az) or math.isfinite(p.hpbw_el)):
        return {"kind": "isotropic", "boresight_gain_db": g_db}
    if not (math.isfinite(p.hpbw_az) and math.isfinite(p.hpbw_el)):
        raise ConfigError("gaussian pattern with a single infinite HPBW is not serialisable")
    return {"kind": "gaussian", "hpbw_deg": math.degrees(p.hpbw_az), "hpbw_el_deg": math.degrees(p.hpbw_el), "boresight_gain_db": g_db}


def _kernel_from(d: dict):
    if d["kind"] == "vna":
        plan = FrequencyPlan.from_band(d["f_start_ghz"] * 1e9, d["f_stop_ghz"] * 1e9, d["delta_f_mhz"] * 1e6)
        return VnaKernel(plan)
    step = d["delay_step_ns"] * 1e-9
    if "autocorrelation" in d:
        return CorrelationKernel(d["autocorrelation"], step, d["n_samples"])
    return CorrelationKernel.sinc(d["bandwidth_ghz"] * 1e9, step, d["n_samples"])


def _kernel_to(k) -> dict:
    if isinstance(k, VnaKernel):
        p = k.plan
        return {"kind": "vna", "f_start_ghz": p.f1 / 1e9, "f_stop_ghz": p.f_stop / 1e9, "delta_f_mhz": p.delta_f / 1e6}
    return {"kind": "correlation", "delay_step_ns": k.delay_step * 1e9, "n_samples": k.n_samples, "autocorrelation": k.table.tolist()}


def _side_from(d: dict, base) -> tuple:
    rot = d.get("rotator", {"horizontal_radius_m": 0.0})
    geom = RotatorGeometry(rot["horizontal_radius_m"], rot.get("vertical_radius_m", 0.0))
    return _grid_from(d["grid"]), geom, _pattern_from(d.get("pattern"), base)


def _side_to(grid, geom, pattern) -> dict:
    return {
        "grid": _grid_to(grid),
        "rotator": {"horizontal_radius_m": geom.horizontal_radius, "vertical_radius_m": geom.vertical_radius},
        "pattern": _pattern_to(pattern),
    }


def sounding_from_dict(d: dict, base: Path | None = None) -> SoundingConfig:
    """Build a :class:`SoundingConfig` from the ``sounding`` section."""
    try:
        jsonschema.validate(d, SCHEMA["properties"]["sounding"])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"sounding: {exc.message}") from None
    try:
        rx_grid, rx_geom, rx_pat = _side_from(d["rx"], base)
        kw = {}
        if "tx" in d:
            kw["tx_grid"], kw["tx_geometry"], kw["tx_pattern"] = _side_from(d["tx"], base)
        carrier = d.get("carrier_ghz")
        return SoundingConfig(
            rx_grid, rx_geom, rx_pat, _kernel_from(d["kernel"]),
            carrier_frequency=None if carrier is None else carrier * 1e9, **kw,
        )
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(f"sounding: {exc}") from None


def sounding_to_dict(cfg: SoundingConfig) -> dict:
    out = {
        "rx": _side_to(cfg.rx_grid, cfg.rx_geometry, cfg.rx_pattern),
        "tx": _side_to(cfg.tx_grid, cfg.tx_geometry, cfg.tx_pattern),
        "kernel": _kernel_to(cfg.kernel),
    }
    if cfg.carrier_frequency is not None:
        out["carrier_ghz"] = cfg.carrier_frequency / 1e9
    return out


def _ns(v):
    return v / 1e9


def _same(v):
    return v


_EST_KEYS = {
    "delay_step_ns": ("delay_step", _ns),
    "angle_coarse_deg": ("angle_coarse_step", math.radians),
    "angle_fine_deg": ("angle_fine_step", math.radians),
    "dist_coarse_m": ("dist_coarse_step", _same),
    "dist_fine_m": ("dist_fine_step", _same),
    "dist_min_m": ("dist_min", _same),
}


def estimator_from_dict(d: dict | None) -> EstimatorConfig:
    kw = {}
    for key, value in (d or {}).items():
        if key in _EST_KEYS:
            name, conv = _EST_KEYS[key]
            kw[name] = conv(value)
        elif key == "dist_bounds_m":
            kw["dist_bounds"] = None if value is None else tuple(value)
        else:
            kw[key] = value
    try:
        return EstimatorConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"estimator: {exc}") from None


@dataclass(frozen=True)
class Scenario:
    """Synthetic channel: the single-path scenario at ``distance`` or explicit paths."""

    distance: float = 10.0
    paths: tuple = ()
    snr_db: float | None = 40.0
    phase_mean: float = 0.0
    phase_sigma: float = 0.0
    wavefront: str = "swf"


@dataclass(frozen=True)
class ExperimentSpec:
    sounding: SoundingConfig
    scenario: Scenario = field(default_factory=Scenario)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    estimators: tuple = ("dss-o-sage", "pwf-sage", "swf-sage", "noise-elim")
    trials: int = 100
    seed: int = 0
    sweep_var: str | None = None
    sweep_values: tuple = ()
    out: str = "results"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trial count must be >= 1")
        if not self.estimators:
            raise ConfigError("estimator list must be non-empty")

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return replace(self, seed=int(seed))


def _scenario_from(d: dict | None) -> Scenario:
    from .geometry import Direction
    from .synth import PathParams

    d = d or {}
    paths = []
    for p in d.get("paths", []):
        dist = p.get("dist_m")
        dod_dist = p.get("dod_dist_m")
        paths.append(
            PathParams(
                gain=10 ** (p["gain_db"] / 20),
                delay=p["delay_ns"] * 1e-9,
                doa=Direction.from_degrees(p["az_deg"], p["el_deg"]),
                dod=Direction.from_degrees(p.get("dod_az_deg", 0.0), p.get("dod_el_deg", 0.0)),
                d_tx=math.inf if dod_dist is None else dod_dist,
                d_rx=math.inf if dist is None else dist,
            )
        )
    snr = d.get("snr_db", 40.0)
    return Scenario(
        distance=d.get("distance_m", 10.0),
        paths=tuple(paths),
        snr_db=math.inf if snr is None else snr,
        phase_mean=d.get("phase_mean_rad", 0.0),
        phase_sigma=d.get("phase_sigma_rad", 0.0),
        wavefront=d.get("wavefront", "swf"),
    )


def spec_from_dict(doc: dict, base: Path | None = None) -> ExperimentSpec:
    validate(doc)
    exp = doc.get("experiment", {})
    sweep = exp.get("sweep")
    return ExperimentSpec(
        sounding=sounding_from_dict(doc["sounding"], base),
        scenario=_scenario_from(doc.get("scenario")),
        estimator=estimator_from_dict(doc.get("estimator")),
        estimators=tuple(exp.get("estimators", ExperimentSpec.estimators)),
        trials=exp.get("trials", 100),
        seed=exp.get("seed", 0),
        sweep_var=sweep["var"] if sweep else None,
        sweep_values=tuple(sweep["values"]) if sweep else (),
        out=exp.get("out", "results"),
        raw=doc,
    )


def load_config(path) -> ExperimentSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return spec_from_dict(doc, path.parent)


def default_document() -> dict:
    """Single-path SIMO scenario at 10 m with the default estimator."""
    return json.loads((Path(__file__).parent / "configs" / "default.json").read_text())
