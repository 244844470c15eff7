"""Flume experiment reduction: probe calibration and Manning's n per region."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .errors import ArgumentError, DegenerateFitError, EmptyInputError, ParseError

DEFAULT_SLOPE = 1.0 / 8.0


@dataclass(frozen=True)
class CalibrationCurve:
    slope: float
    intercept: float
    r_squared: float

    def __call__(self, voltage):
        return self.slope * np.asarray(voltage, dtype=np.float64) + self.intercept


@dataclass(frozen=True)
class ExperimentRun:
    region_id: str
    slope_S: float
    width_w: float
    depth_series: np.ndarray
    velocity_V: float
    flow_rate: float = float("nan")

    def __post_init__(self):
        depths = np.asarray(self.depth_series, dtype=np.float64).ravel()
        object.__setattr__(self, "depth_series", depths)
        if not self.slope_S > 0:
            raise ArgumentError(f"{self.region_id}: slope must be positive")
        if not self.width_w > 0:
            raise ArgumentError(f"{self.region_id}: width must be positive")
        if not self.velocity_V > 0:
            raise ArgumentError(f"{self.region_id}: velocity must be positive")
        if depths.size == 0:
            raise EmptyInputError(f"{self.region_id}: empty depth series")
        if not np.all(np.isfinite(depths)) or np.any(depths < 0):
            raise ArgumentError(f"{self.region_id}: depths must be finite and >= 0")


@dataclass(frozen=True)
class RegionN:
    region_id: str
    n: float
    n_runs: int


def fit_calibration(samples) -> CalibrationCurve:
    """Ordinary least-squares line ``reference = slope * voltage + intercept``.

    Parameters
    ----------
    samples : sequence of (voltage, reference) pairs

    Raises
    ------
    DegenerateFitError
        Fewer than two distinct voltages.
    """
    arr = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    v, ref = arr[:, 0], arr[:, 1]
    if np.unique(v).size < 2:
        raise DegenerateFitError("calibration needs at least two distinct voltages")
    vm, rm = v.mean(), ref.mean()
    sxx = np.sum((v - vm) ** 2)
    sxy = np.sum((v - vm) * (ref - rm))
    slope = sxy / sxx
    intercept = rm - slope * vm
    ss_tot = np.sum((ref - rm) ** 2)
    ss_res = np.sum((ref - (slope * v + intercept)) ** 2)
    # constant response is fitted exactly
    r2 = 1.0 if ss_tot == 0 else float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))
    return CalibrationCurve(float(slope), float(intercept), r2)


def hydraulic_radius(h, w):
    """Hydraulic radius of a rectangular channel, ``h*w / (2h + w)``."""
    if not w > 0:
        raise ArgumentError("width must be positive")
    if h < 0:
        raise ArgumentError("depth must be non-negative")
    return (h * w) / (2.0 * h + w)


def manning_n(R, S, V):
    """Manning's n from hydraulic radius, slope and velocity (SI units)."""
    if not V > 0:
        raise ArgumentError("velocity must be positive")
    if not S > 0:
        raise ArgumentError("slope must be positive")
    if R < 0:
        raise ArgumentError("hydraulic radius must be non-negative")
    return R ** (2.0 / 3.0) * math.sqrt(S) / V


def run_n(run: ExperimentRun, reducer="mean") -> float:
    if reducer == "mean":
        h = math.fsum(run.depth_series) / run.depth_series.size
    elif reducer == "median":
        h = float(np.median(run.depth_series))
    else:
        raise ArgumentError(f"unknown depth reducer {reducer!r}")
    return manning_n(hydraulic_radius(h, run.width_w), run.slope_S, run.velocity_V)


def reduce_region(runs: Sequence[ExperimentRun], reducer="mean") -> RegionN:
    """Average the per-run n of one measurement region.

    Each run's depth series is first collapsed to one depth (mean by
    default), turned into n, and the run values are averaged.
    """
    runs = list(runs)
    if not runs:
        raise EmptyInputError("no runs to reduce")
    ids = {r.region_id for r in runs}
    if len(ids) != 1:
        raise ArgumentError(f"runs mix regions: {sorted(ids)}")
    # sorted summation keeps the mean independent of run order
    values = sorted(run_n(r, reducer) for r in runs)
    return RegionN(runs[0].region_id, math.fsum(values) / len(values), len(values))


def reduce_all(runs: Sequence[ExperimentRun], reducer="mean") -> List[RegionN]:
    """Group runs by region (first-appearance order) and reduce each."""
    groups: Dict[str, list] = {}
    for r in runs:
        groups.setdefault(r.region_id, []).append(r)
    return [reduce_region(g, reducer) for g in groups.values()]


def invert_velocity(n, h, w, S=DEFAULT_SLOPE):
    """Velocity that makes a run of depth ``h`` yield Manning's ``n``."""
    return hydraulic_radius(h, w) ** (2.0 / 3.0) * math.sqrt(S) / n


# -- CSV plumbing -----------------------------------------------------------

RUNS_HEADER = ["region_id", "S", "w", "V", "flow_lpm"]


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_calibration_csv(path) -> CalibrationCurve:
    rows = _read_csv(path)
    try:
        samples = [(float(r["voltage"]), float(r["reference"])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: bad calibration row ({exc})") from None
    return fit_calibration(samples)


def read_depth_csv(path, calibration: CalibrationCurve = None) -> np.ndarray:
    """Depth series from ``t_seconds,h_meters`` or, with a curve, ``t_seconds,voltage``."""
    rows = _read_csv(path)
    column = "h_meters"
    if rows and "h_meters" not in rows[0] and "voltage" in rows[0]:
        if calibration is None:
            raise ParseError(f"{path}: voltage series needs a calibration curve")
        column = "voltage"
    values = []
    for i, r in enumerate(rows, start=2):
        try:
            values.append(float(r[column]))
        except (KeyError, ValueError, TypeError):
            raise ParseError(f"{path}: bad {column} value", line=i) from None
    values = np.array(values)
    if column == "voltage":
        values = calibration(values)
    return values


def read_runs(runs_csv, calibration: CalibrationCurve = None) -> List[ExperimentRun]:
    """Load a runs table and the depth series of every run.

    A row may name its depth file in a ``depth_file`` column (relative to the
    runs file). Otherwise the file is ``depth/<region_id>_<k>.csv`` next to
    the runs file, ``k`` counting that region's runs from 0.
    """
    runs_csv = Path(runs_csv)
    rows = _read_csv(runs_csv)
    counter: Dict[str, int] = {}
    runs = []
    for line, r in enumerate(rows, start=2):
        try:
            region = r["region_id"].strip()
            S = float(r["S"]) if r.get("S") not in (None, "") else DEFAULT_SLOPE
            w, V = float(r["w"]), float(r["V"])
            flow = float(r["flow_lpm"]) if r.get("flow_lpm") not in (None, "") else float("nan")
        except (KeyError, ValueError, AttributeError) as exc:
            raise ParseError(f"{runs_csv}: bad run row ({exc})", line=line) from None
        k = counter.get(region, 0)
        counter[region] = k + 1
        rel = r.get("depth_file") or f"depth/{region}_{k}.csv"
        depths = read_depth_csv(runs_csv.parent / rel, calibration)
        runs.append(ExperimentRun(region, S, w, depths, V, flow))
    return runs


def write_region_csv(regions: Sequence[RegionN], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["region_id", "n", "n_runs"])
        for r in regions:
            wr.writerow([r.region_id, repr(float(r.n)), r.n_runs])


def read_region_csv(path) -> List[RegionN]:
    out = []
    for line, r in enumerate(_read_csv(path), start=2):
        try:
            out.append(RegionN(r["region_id"], float(r["n"]), int(r["n_runs"])))
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"{path}: bad region row ({exc})", line=line) from None
    return out
