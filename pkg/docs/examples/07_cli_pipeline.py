"""Run the whole pipeline through the command line interface.

Synthetic inputs are written to a scratch directory and each stage is
invoked as ``python -m pcfriction <command>``. Every output gets a
``.manifest.json`` sidecar recording the resolved config, the seed and
the SHA-256 of each input.
"""
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from pcfriction.pointcloud import write_ascii_xyz
from pcfriction.synthetic import survey_cloud, write_flume_fixture, write_region_clouds

CONFIG = {
    "seed": 11,
    "corpus": {"samples_per_region": 150},
    "net": {"encoder_widths": [3, 32, 64], "head_widths": [64, 32, 1]},
    "train": {"max_epochs": 10, "learning_rate": 0.003},
    "tiling": {"origin": [0.0, 0.0]},
}


def run(*args):
    cmd = [sys.executable, "-m", "pcfriction", *map(str, args), "--config", "config.json"]
    print("$ pcfriction", " ".join(map(str, args)))
    done = subprocess.run(cmd, capture_output=True, text=True)
    print("  " + (done.stdout or done.stderr).strip().replace("\n", "\n  "))
    done.check_returncode()


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    region_n = write_flume_fixture(tmp / "flume")
    write_region_clouds(tmp / "clouds", region_n, n_points=400)
    amps = np.array([[0.004, 0.02, 0.045], [0.01, 0.03, 0.04]])
    (tmp / "survey.xyz").write_bytes(write_ascii_xyz(survey_cloud(amps, 200, np.random.default_rng(0))))
    x = np.arange(0.05, 3.0, 0.1)
    (tmp / "sections.csv").write_text("section_id,station,x,y\n" + "".join(
        f"XS,{float(v - x[0])!r},{float(v)!r},0.5\n" for v in x))
    (tmp / "config.json").write_text(json.dumps(CONFIG))

    os.chdir(tmp)
    run("labcalc", "--runs", "flume/runs.csv", "--out", "regions_n.csv")
    run("make-dataset", "--regions-n", "regions_n.csv", "--clouds", "clouds", "--out", "corpus.jsonl")
    run("train", "--corpus", "corpus.jsonl", "--out", "model.ckpt")
    run("infer", "--checkpoint", "model.ckpt", "--cloud", "survey.xyz", "--out", "friction.asc",
        "--counts", "tile_counts.csv")
    print(Path("friction.asc").read_text())
    run("compound", "--grid", "friction.asc", "--sections", "sections.csv",
        "--max-segments", 4, "--out", "sections_n.csv")
    print("\n" + Path("sections_n.csv").read_text())
    manifest = json.loads(Path("friction.asc.manifest.json").read_text())
    print("grid manifest inputs:", {k: v["sha256"][:12] for k, v in manifest["inputs"].items()})
    os.chdir("/")
