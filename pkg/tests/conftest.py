import json
import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from pcfriction.cli import main
from pcfriction.pointcloud import write_ascii_xyz
from pcfriction.synthetic import survey_cloud, write_flume_fixture, write_region_clouds

SMALL_CONFIG = {
    "seed": 7,
    "corpus": {"samples_per_region": 20, "blend_fraction": 0.5},
    "net": {"encoder_widths": [3, 8, 16], "head_widths": [16, 8, 1]},
    "train": {"batch_size": 16, "max_epochs": 5, "learning_rate": 0.005},
    "tiling": {"origin": [0.0, 0.0]},
}


@contextmanager
def chdir(path):
    old = os.getcwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(old)


def cli(*argv):
    return main([str(a) for a in argv])


def write_inputs(workdir, config=None):
    """Flume records, region clouds, a 3x2 m survey and one section, all under ``workdir``."""
    workdir = Path(workdir)
    region_n = write_flume_fixture(workdir / "flume")
    write_region_clouds(workdir / "clouds", region_n, n_points=300)
    amps = np.array([[0.004, 0.02, 0.045], [0.01, 0.03, 0.04]])
    cloud = survey_cloud(amps, 150, np.random.default_rng(0))
    (workdir / "survey.xyz").write_bytes(write_ascii_xyz(cloud))
    x = np.arange(0.05, 3.0, 0.1)
    rows = ["section_id,station,x,y"] + [f"S1,{float(xi - x[0])!r},{float(xi)!r},1.25" for xi in x]
    (workdir / "sections.csv").write_text("\n".join(rows) + "\n")
    (workdir / "config.json").write_text(json.dumps(config or SMALL_CONFIG))
    return region_n


PIPELINE_OUTPUTS = ["regions_n.csv", "corpus.jsonl", "model.ckpt", "model.ckpt.log.csv",
                    "grid.asc", "table.csv", "table.summary.csv"]


def run_pipeline(workdir, epochs=5):
    """labcalc -> make-dataset -> train -> infer -> compound with cwd-relative paths."""
    write_inputs(workdir)
    codes = []
    with chdir(workdir):
        codes.append(cli("labcalc", "--config", "config.json", "--runs", "flume/runs.csv",
                         "--out", "regions_n.csv"))
        codes.append(cli("make-dataset", "--config", "config.json", "--regions-n", "regions_n.csv",
                         "--clouds", "clouds", "--out", "corpus.jsonl"))
        codes.append(cli("train", "--config", "config.json", "--corpus", "corpus.jsonl",
                         "--epochs", epochs, "--out", "model.ckpt"))
        codes.append(cli("infer", "--config", "config.json", "--checkpoint", "model.ckpt",
                         "--cloud", "survey.xyz", "--out", "grid.asc"))
        codes.append(cli("compound", "--config", "config.json", "--grid", "grid.asc",
                         "--sections", "sections.csv", "--out", "table.csv"))
    return codes


# -- acceptance report ------------------------------------------------------

ACCEPTANCE_LINES = []


def record(number, title, ok, detail):
    """Log one acceptance verdict; printed again in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2])):
            terminalreporter.write_line(line)
