"""Map friction over a survey and compound it along a cross section.

A regressor is trained briefly, applied tile by tile to a synthetic
survey, and the resulting grid is sampled along a section. Station
values are grouped into at most 20 segments and each group is combined
with the Horton-Einstein power mean.
"""
import tempfile
from pathlib import Path

import numpy as np

from pcfriction.augment import CorpusSpec, build_corpus
from pcfriction.cli import infer_grid
from pcfriction.regressor import NetConfig, RegressionNet, TrainConfig, train
from pcfriction.synthetic import amplitude_to_n, survey_cloud, texture_cloud
from pcfriction.xsection import (
    CrossSection,
    compound_section,
    export_grid_esri_ascii,
    export_section_table,
    format_esri_ascii,
)

amps = np.linspace(0.002, 0.05, 10)
regions = {f"T{i}": (texture_cloud(a, 1500, np.random.default_rng(i)), float(amplitude_to_n(a)))
           for i, a in enumerate(amps)}
net = RegressionNet(NetConfig(encoder_widths=(3, 32, 64), head_widths=(64, 32, 1)))
train(net, build_corpus(regions, CorpusSpec(samples_per_region=60, seed=0)), [],
      TrainConfig(learning_rate=3e-3, max_epochs=8))

# smooth floodplain on the left, rough on the right
survey_amps = np.array([[0.004, 0.004, 0.006, 0.03, 0.045, 0.045]] * 2)
survey = survey_cloud(survey_amps, 200, np.random.default_rng(7))
grid, _ = infer_grid(net, survey, cell_size=1.0, origin=(0.0, 0.0))
print(format_esri_ascii(grid))

x = np.linspace(0.05, 5.95, 60)
section = CrossSection("XS-1", x - x[0], xy=np.column_stack([x, np.full_like(x, 1.0)]))
out = compound_section(section, grid, max_segments=4)
for a, b, n in zip(out.segment_breaks, out.segment_ends, out.segment_n):
    print(f"stations {a:5.2f} - {b:5.2f}: n = {n:.4f}")
print(f"compounded section n {out.mean_n:.4f}, plain station mean {out.mean_station_n:.4f}")

with tempfile.TemporaryDirectory() as tmp:
    export_grid_esri_ascii(grid, Path(tmp) / "friction.asc")
    export_section_table([out], Path(tmp) / "sections.csv")
    print("\n" + (Path(tmp) / "sections.csv").read_text())
