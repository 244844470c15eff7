"""Reduce flume runs to one Manning's n per measurement region.

A synthetic flume record is written first. Its velocities were chosen so
that every run reproduces a known n, which lets the reduction be checked
against the value it should recover.
"""
import tempfile
from pathlib import Path

from pcfriction.flume import hydraulic_radius, manning_n, read_runs, reduce_all
from pcfriction.synthetic import write_flume_fixture

# One run by hand: 1 cm of water in a 30 cm wide flume at slope 1/8.
R = hydraulic_radius(0.01, 0.3)
print(f"hydraulic radius {R:.6f} m, n at 0.2 m/s = {manning_n(R, 0.125, 0.2):.5f}")

with tempfile.TemporaryDirectory() as tmp:
    truth = write_flume_fixture(Path(tmp))
    regions = reduce_all(read_runs(Path(tmp) / "runs.csv"))

print(f"\n{'region':<15}{'recovered n':>12}{'true n':>10}{'runs':>6}")
for r in regions:
    print(f"{r.region_id:<15}{r.n:>12.6f}{truth[r.region_id]:>10.6f}{r.n_runs:>6}")
