"""Synthetic surfaces and flume records with a known texture -> n mapping.

Surfaces are a tilted plane plus sinusoidal relief of amplitude ``a``.
Roughness is tied to relief through a fixed monotone map from amplitude
into the measurable n range, which gives training and inference tests a
ground truth to recover.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .flume import DEFAULT_SLOPE, invert_velocity
from .pointcloud import PointCloud, write_ascii_xyz

AMP_MIN, AMP_MAX = 0.002, 0.05
N_LO, N_HI = 0.025, 0.25
WAVELENGTH = 0.25
PLANE_SLOPE = 0.01

SLABS = ("Rough", "Medium", "Smooth")
ZONES = ("Left", "Center", "Right")


def amplitude_to_n(a):
    """Linear, strictly increasing map from relief amplitude to Manning's n."""
    a = np.asarray(a, dtype=np.float64)
    return N_LO + (N_HI - N_LO) * (a - AMP_MIN) / (AMP_MAX - AMP_MIN)


def n_to_amplitude(n):
    n = np.asarray(n, dtype=np.float64)
    return AMP_MIN + (AMP_MAX - AMP_MIN) * (n - N_LO) / (N_HI - N_LO)


def relief(xy, amplitude, wavelength=WAVELENGTH, plane_slope=PLANE_SLOPE):
    xy = np.asarray(xy, dtype=np.float64)
    k = 2 * np.pi / wavelength
    return plane_slope * xy[:, 0] + amplitude * np.sin(k * xy[:, 0]) * np.sin(k * xy[:, 1])


def texture_cloud(amplitude, n_points, rng, extent=(1.0, 1.0), origin=(0.0, 0.0),
                  source="synthetic") -> PointCloud:
    """Uniformly scattered points over a textured patch."""
    xy = rng.uniform(0.0, 1.0, size=(n_points, 2)) * np.asarray(extent) + np.asarray(origin)
    z = relief(xy - np.asarray(origin), amplitude)
    return PointCloud(np.column_stack([xy, z]), source=source)


def region_ids():
    return [f"{slab}-{zone}" for slab in SLABS for zone in ZONES]


def demo_region_n(seed=0):
    """Nine region labels spread over the measurable range."""
    rng = np.random.default_rng(seed)
    # rougher slabs first, so Rough-* carries the largest n
    base = np.linspace(0.22, 0.04, 9)
    return {rid: float(n) for rid, n in zip(region_ids(), base + rng.uniform(-0.005, 0.005, 9))}


def write_flume_fixture(directory, region_n=None, runs_per_region=4, width=0.3, seed=0):
    """Write ``runs.csv`` plus one depth file per run, generated from known n.

    Velocities are chosen so each run reproduces its region's n exactly
    from the mean depth. Depth noise is symmetric around that mean.
    """
    directory = Path(directory)
    (directory / "depth").mkdir(parents=True, exist_ok=True)
    region_n = region_n or demo_region_n(seed)
    rng = np.random.default_rng(seed)
    with open(directory / "runs.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["region_id", "S", "w", "V", "flow_lpm"])
        for rid, n in region_n.items():
            for k in range(runs_per_region):
                h = 0.005 + 0.004 * k + rng.uniform(0, 0.001)
                V = invert_velocity(n, h, width, DEFAULT_SLOPE)
                flow = V * h * width * 60_000.0
                wr.writerow([rid, repr(DEFAULT_SLOPE), repr(width), repr(V), f"{flow:.3f}"])
                noise = rng.normal(0, 0.0002, 90)
                series = h + np.concatenate([noise, -noise])
                with open(directory / "depth" / f"{rid}_{k}.csv", "w", newline="") as dh:
                    dw = csv.writer(dh, lineterminator="\n")
                    dw.writerow(["t_seconds", "h_meters"])
                    for i, v in enumerate(series):
                        dw.writerow([i, repr(float(v))])
    return region_n


def write_region_clouds(directory, region_n, n_points=2000, seed=0):
    """One ``<region_id>.xyz`` per region, relief amplitude set from its n."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, (rid, n) in enumerate(sorted(region_n.items())):
        rng = np.random.default_rng([seed, i])
        cloud = texture_cloud(float(n_to_amplitude(n)), n_points, rng, source="handheld-scan")
        (directory / f"{rid}.xyz").write_bytes(write_ascii_xyz(cloud))


def survey_cloud(amplitudes, density, rng, cell=1.0):
    """A mosaic of square patches, one amplitude per cell (row-major, south first)."""
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    parts = []
    for r in range(amplitudes.shape[0]):
        for c in range(amplitudes.shape[1]):
            pc = texture_cloud(amplitudes[r, c], density, rng, extent=(cell, cell),
                               origin=(c * cell, r * cell), source="airborne-lidar")
            parts.append(pc.xyz)
    return PointCloud(np.concatenate(parts), source="airborne-lidar")
