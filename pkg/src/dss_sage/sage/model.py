"""Estimator settings, per-path estimates, run results and evaluation counters."""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Direction
from ..synth import PathParams

THRESHOLD_MODES = ("relative", "friis", "absolute")


@dataclass(frozen=True)
class EstimatorConfig:
    """Search grids, data windows, gain threshold and iteration control.

    Angles are radians, delays seconds, distances metres. ``dist_bounds``
    of ``None`` selects bounds from the scenario (see
    :func:`dss_sage.sage.search.distance_bounds`). ``threshold_value`` is a
    distance for ``friis`` mode and a linear amplitude for ``absolute``.
    ``dynamic_range`` divides the reference gain (1000 gives the 30 dB
    estimation range of the pipeline).
    """

    delay_step: float = 5e-13
    angle_coarse_step: float = math.radians(0.2)
    angle_fine_step: float = math.radians(0.002)
    dist_coarse_step: float = 0.2
    dist_fine_step: float = 0.01
    dist_bounds: tuple[float, float] | None = None
    dist_min: float = 0.5
    far_candidate: bool = True
    delay_half_width: int = 10
    angle_window_factor: float = 1.5
    threshold_mode: str = "relative"
    threshold_value: float | None = None
    dynamic_range: float = 1000.0
    convergence_ratio: float = 1e-3
    max_cycles: int = 10
    max_paths: int = 20
    wavefront: str = "swf"
    accelerated: bool = True
    chunk: int = 32768

    def __post_init__(self):
        if not (0 < self.angle_fine_step < self.angle_coarse_step):
            raise ValueError("angle fine step must be positive and below the coarse step")
        if not (0 < self.dist_fine_step < self.dist_coarse_step):
            raise ValueError("distance fine step must be positive and below the coarse step")
        for coarse, fine in (
            (self.angle_coarse_step, self.angle_fine_step),
            (self.dist_coarse_step, self.dist_fine_step),
        ):
            q = coarse / fine
            if abs(q - round(q)) > 1e-6:
                raise ValueError("coarse steps must be integer multiples of fine steps")
        if self.delay_step <= 0:
            raise ValueError("delay step must be positive")
        if self.dynamic_range <= 1:
            raise ValueError("dynamic range must exceed 1")
        if self.convergence_ratio <= 0:
            raise ValueError("convergence ratio must be positive")
        if self.max_cycles < 1 or self.max_paths < 1:
            raise ValueError("max_cycles and max_paths must be >= 1")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold mode must be one of {THRESHOLD_MODES}")
        if self.threshold_mode != "relative" and self.threshold_value is None:
            raise ValueError(f"{self.threshold_mode} threshold needs threshold_value")
        if self.wavefront not in ("swf", "ffa"):
            raise ValueError("wavefront must be 'swf' or 'ffa'")
        if self.dist_bounds is not None and not (0 < self.dist_bounds[0] < self.dist_bounds[1]):
            raise ValueError("distance bounds must satisfy 0 < lo < hi")

    @property
    def angle_ratio(self) -> int:
        return int(round(self.angle_coarse_step / self.angle_fine_step))

    @property
    def dist_ratio(self) -> int:
        return int(round(self.dist_coarse_step / self.dist_fine_step))


@dataclass
class EvalCounters:
    likelihood_evals: int = 0
    elements_touched: int = 0
    max_elements_per_eval: int = 0
    fine_evals: int = 0
    mstep_times: list = field(default_factory=list)

    def add(self, evals: int, elements_per_eval: int) -> None:
        self.likelihood_evals += int(evals)
        self.elements_touched += int(evals) * int(elements_per_eval)
        if evals:
            self.max_elements_per_eval = max(self.max_elements_per_eval, int(elements_per_eval))

    def merge(self, other: "EvalCounters") -> None:
        self.likelihood_evals += other.likelihood_evals
        self.elements_touched += other.elements_touched
        self.max_elements_per_eval = max(self.max_elements_per_eval, other.max_elements_per_eval)
        self.fine_evals += other.fine_evals
        self.mstep_times.extend(other.mstep_times)

    @property
    def elements_per_eval(self) -> float:
        return self.elements_touched / self.likelihood_evals if self.likelihood_evals else 0.0

    @contextmanager
    def timed(self):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.mstep_times.append(time.perf_counter() - t0)

    def to_dict(self) -> dict:
        return {
            "likelihood_evals": self.likelihood_evals,
            "elements_touched": self.elements_touched,
            "max_elements_per_eval": self.max_elements_per_eval,
            "fine_search_evals": self.fine_evals,
            "mstep_count": len(self.mstep_times),
            "mstep_seconds_mean": float(np.mean(self.mstep_times)) if self.mstep_times else 0.0,
        }


@dataclass
class PathEstimate:
    """Estimated path; field layout follows :class:`~dss_sage.synth.PathParams`."""

    gain: float
    delay: float
    doa: Direction
    dod: Direction
    d_tx: float
    d_rx: float
    phases: np.ndarray
    obs_delay: float = 0.0
    index: tuple = (0, 0, 0)
    objective: float = 0.0
    updated_cycle: int = 0
    warnings: list = field(default_factory=list)

    def to_params(self) -> PathParams:
        return PathParams(
            gain=self.gain,
            delay=max(self.delay, 0.0),
            doa=self.doa,
            dod=self.dod,
            d_tx=self.d_tx,
            d_rx=self.d_rx,
            phases=self.phases,
        )

    def to_dict(self, phases: bool = False) -> dict:
        az, el = self.doa.degrees
        out = {
            "gain_db": 20 * math.log10(self.gain) if self.gain > 0 else None,
            "delay_ns": self.delay * 1e9,
            "az_deg": az,
            "el_deg": el,
            "dist_m": self.d_rx if math.isfinite(self.d_rx) else None,
            "dod_az_deg": self.dod.degrees[0],
            "dod_el_deg": self.dod.degrees[1],
            "dod_dist_m": self.d_tx if math.isfinite(self.d_tx) else None,
            "updated_cycle": self.updated_cycle,
        }
        if phases:
            out["phases_rad"] = np.asarray(self.phases).tolist()
        return out


@dataclass
class EstimationResult:
    paths: list
    likelihood_trace: list
    counters: EvalCounters
    converged: bool
    cycles: int
    estimator: str = "dss-o-sage"
    threshold: float = 0.0

    def to_dict(self, phases: bool = False) -> dict:
        return {
            "estimator": self.estimator,
            "paths": [p.to_dict(phases) for p in self.paths],
            "likelihood_trace": [float(v) for v in self.likelihood_trace],
            "counters": self.counters.to_dict(),
            "converged": self.converged,
            "cycles": self.cycles,
            "threshold_db": 20 * math.log10(self.threshold) if self.threshold > 0 else None,
        }
