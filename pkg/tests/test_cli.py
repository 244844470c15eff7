import csv
import hashlib
import json

import numpy as np
import pytest

from conftest import chdir, cli, run_pipeline, write_inputs
from pcfriction.augment import read_manifest
from pcfriction.pointcloud import PointCloud, write_ascii_xyz
from pcfriction.regressor import NetConfig, RegressionNet, load_checkpoint, save_checkpoint
from pcfriction.xsection import NODATA, FrictionGrid, export_grid_esri_ascii, read_friction_grid


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    codes = run_pipeline(d)
    return d, codes


class TestPipeline:
    def test_exit_codes(self, pipeline):
        assert pipeline[1] == [0] * 5

    def test_labcalc_rows(self, pipeline):
        rows = list(csv.DictReader(open(pipeline[0] / "regions_n.csv")))
        assert len(rows) == 9

    def test_corpus_count(self, pipeline):
        header, samples = read_manifest(pipeline[0] / "corpus.jsonl")
        assert len(samples) == 9 * 20 + 90
        assert header["seed"] == 7

    def test_grid(self, pipeline):
        g = read_friction_grid(pipeline[0] / "grid.asc")
        assert (g.ncols, g.nrows) == (3, 2)
        assert np.all((g.values >= 0.025) & (g.values <= 0.25))

    def test_table(self, pipeline):
        rows = list(csv.DictReader(open(pipeline[0] / "table.csv")))
        assert 1 <= len(rows) <= 20
        assert all(0.025 <= float(r["n"]) <= 0.25 for r in rows)

    def test_manifests_record_seed(self, pipeline):
        for name in ("regions_n.csv", "corpus.jsonl", "model.ckpt", "grid.asc", "table.csv"):
            doc = json.loads((pipeline[0] / f"{name}.manifest.json").read_text())
            assert doc["seed"] == 7 and doc["config"]["seed"] == 7
            assert all(len(v["sha256"]) == 64 for v in doc["inputs"].values())

    def test_loss_log(self, pipeline):
        rows = list(csv.DictReader(open(pipeline[0] / "model.ckpt.log.csv")))
        assert [int(r["epoch"]) for r in rows] == list(range(5))


class TestLabcalc:
    def test_missing(self, tmp_path, capsys):
        assert cli("labcalc", "--runs", tmp_path / "nope.csv", "--out", tmp_path / "o.csv") == 2
        assert "nope.csv" in capsys.readouterr().err

    def test_empty_runs(self, tmp_path):
        (tmp_path / "runs.csv").write_text("region_id,S,w,V,flow_lpm\n")
        assert cli("labcalc", "--runs", tmp_path / "runs.csv", "--out", tmp_path / "o.csv") == 3

    def test_missing_depth_file(self, tmp_path):
        (tmp_path / "runs.csv").write_text("region_id,S,w,V,flow_lpm\nA,0.125,0.3,0.2,1\n")
        assert cli("labcalc", "--runs", tmp_path / "runs.csv", "--out", tmp_path / "o.csv") == 2

    def test_invalid_run_names_region(self, tmp_path, capsys):
        (tmp_path / "d.csv").write_text("t_seconds,h_meters\n0,0.01\n")
        (tmp_path / "runs.csv").write_text(
            "region_id,S,w,V,flow_lpm,depth_file\nRough-Left,0.125,0.3,-1,1,d.csv\n")
        assert cli("labcalc", "--runs", tmp_path / "runs.csv", "--out", tmp_path / "o.csv") == 3
        assert "Rough-Left" in capsys.readouterr().err

    def test_median_flag(self, tmp_path):
        (tmp_path / "d.csv").write_text("t_seconds,h_meters\n0,0.01\n1,0.01\n2,0.04\n")
        (tmp_path / "runs.csv").write_text(
            "region_id,S,w,V,flow_lpm,depth_file\nA,0.125,0.3,0.2,1,d.csv\n")
        cli("labcalc", "--runs", tmp_path / "runs.csv", "--out", tmp_path / "mean.csv")
        cli("labcalc", "--runs", tmp_path / "runs.csv", "--out", tmp_path / "med.csv", "--median")
        n_mean = float(list(csv.DictReader(open(tmp_path / "mean.csv")))[0]["n"])
        n_med = float(list(csv.DictReader(open(tmp_path / "med.csv")))[0]["n"])
        assert n_med < n_mean
        doc = json.loads((tmp_path / "med.csv.manifest.json").read_text())
        assert doc["config"]["labcalc"]["reducer"] == "median"


class TestConfig:
    def test_unknown_key(self, tmp_path):
        (tmp_path / "c.json").write_text('{"corpus": {"sample_per_region": 3}}')
        assert cli("labcalc", "--config", tmp_path / "c.json", "--runs", "x.csv") == 4

    def test_missing_config(self, tmp_path):
        assert cli("labcalc", "--config", tmp_path / "none.json") == 2


class TestMakeDataset:
    def _inputs(self, tmp_path):
        write_inputs(tmp_path)
        with chdir(tmp_path):
            assert cli("labcalc", "--runs", "flume/runs.csv", "--out", "regions_n.csv") == 0

    def test_count_and_hash(self, tmp_path):
        self._inputs(tmp_path)
        with chdir(tmp_path):
            for name in ("a.jsonl", "b.jsonl"):
                assert cli("make-dataset", "--regions-n", "regions_n.csv", "--clouds", "clouds",
                           "--samples-per-region", 100, "--seed", 3, "--out", name) == 0
        assert sha(tmp_path / "a.jsonl") == sha(tmp_path / "b.jsonl")
        assert len(read_manifest(tmp_path / "a.jsonl")[1]) == 1350

    def test_no_blend(self, tmp_path):
        self._inputs(tmp_path)
        with chdir(tmp_path):
            cli("make-dataset", "--regions-n", "regions_n.csv", "--clouds", "clouds",
                "--samples-per-region", 5, "--blend-fraction", 0, "--out", "c.jsonl")
        labels = {float(r["n"]) for r in csv.DictReader(open(tmp_path / "regions_n.csv"))}
        assert {s.target_n for s in read_manifest(tmp_path / "c.jsonl")[1]} <= labels

    def test_undersized(self, tmp_path, capsys):
        self._inputs(tmp_path)
        small = PointCloud(np.random.default_rng(0).uniform(0, 1, (20, 3)))
        (tmp_path / "clouds" / "Medium-Right.xyz").write_bytes(write_ascii_xyz(small))
        with chdir(tmp_path):
            assert cli("make-dataset", "--regions-n", "regions_n.csv", "--clouds", "clouds",
                       "--samples-per-region", 2, "--out", "c.jsonl") == 3
        assert "Medium-Right" in capsys.readouterr().err


class TestTrain:
    def test_corrupt_line(self, pipeline, tmp_path, capsys):
        lines = (pipeline[0] / "corpus.jsonl").read_text().splitlines()
        lines[4] = "{not json"
        (tmp_path / "bad.jsonl").write_text("\n".join(lines) + "\n")
        assert cli("train", "--config", pipeline[0] / "config.json", "--corpus",
                   tmp_path / "bad.jsonl", "--out", tmp_path / "m.ckpt") == 3
        assert "line 5" in capsys.readouterr().err

    def test_resume(self, pipeline, tmp_path):
        d = pipeline[0]
        before = load_checkpoint(d / "model.ckpt").step_count
        assert cli("train", "--config", d / "config.json", "--corpus", d / "corpus.jsonl",
                   "--epochs", 7, "--resume", d / "model.ckpt", "--out", tmp_path / "r.ckpt") == 0
        after = load_checkpoint(tmp_path / "r.ckpt").step_count
        assert after > before
        rows = list(csv.DictReader(open(tmp_path / "r.ckpt.log.csv")))
        assert [int(r["epoch"]) for r in rows] == [5, 6]

    def test_mismatch(self, pipeline, tmp_path):
        other = RegressionNet(NetConfig(encoder_widths=(3, 4), head_widths=(4, 1)))
        save_checkpoint(other, tmp_path / "o.ckpt")
        d = pipeline[0]
        assert cli("train", "--config", d / "config.json", "--corpus", d / "corpus.jsonl",
                   "--resume", tmp_path / "o.ckpt", "--out", tmp_path / "r.ckpt") == 4


class TestInfer:
    def test_uniform_cloud(self, pipeline, tmp_path):
        # the same point pattern repeated in every cell
        rng = np.random.default_rng(1)
        patch = rng.uniform(0.0, 0.999, (60, 3))
        cells = [patch + [c, r, 0.0] for r in range(2) for c in range(3)]
        (tmp_path / "u.xyz").write_bytes(write_ascii_xyz(PointCloud(np.concatenate(cells))))
        assert cli("infer", "--config", pipeline[0] / "config.json", "--checkpoint",
                   pipeline[0] / "model.ckpt", "--cloud", tmp_path / "u.xyz",
                   "--out", tmp_path / "u.asc", "--counts", tmp_path / "counts.csv") == 0
        g = read_friction_grid(tmp_path / "u.asc")
        assert g.values.shape == (2, 3)
        assert np.ptp(g.values) <= 1e-9
        counts = list(csv.DictReader(open(tmp_path / "counts.csv")))
        assert [int(r["n_points"]) for r in counts] == [60] * 6

    def test_sparse_tile_nodata(self, pipeline, tmp_path):
        rng = np.random.default_rng(2)
        dense = rng.uniform(0, 0.99, (50, 3))
        sparse = rng.uniform(0, 0.99, (2, 3)) + [1, 0, 0]
        (tmp_path / "s.xyz").write_bytes(write_ascii_xyz(PointCloud(np.vstack([dense, sparse]))))
        assert cli("infer", "--config", pipeline[0] / "config.json", "--checkpoint",
                   pipeline[0] / "model.ckpt", "--cloud", tmp_path / "s.xyz",
                   "--out", tmp_path / "s.asc") == 0
        g = read_friction_grid(tmp_path / "s.asc")
        assert g.values[0, 1] == NODATA and 0.025 <= g.values[0, 0] <= 0.25

    def test_empty_cloud(self, pipeline, tmp_path):
        (tmp_path / "e.xyz").write_text("")
        assert cli("infer", "--checkpoint", pipeline[0] / "model.ckpt", "--cloud",
                   tmp_path / "e.xyz", "--out", tmp_path / "e.asc") == 3


class TestCompound:
    def _sections(self, tmp_path):
        x = np.arange(0.05, 4.0, 0.1)
        rows = ["section_id,station,x,y"] + [f"A,{float(xi)!r},{float(xi)!r},0.5" for xi in x]
        (tmp_path / "s.csv").write_text("\n".join(rows) + "\n")

    def test_uniform(self, tmp_path):
        export_grid_esri_ascii(FrictionGrid((0, 0), 1.0, np.full((1, 4), 0.1)), tmp_path / "g.asc")
        self._sections(tmp_path)
        assert cli("compound", "--grid", tmp_path / "g.asc", "--sections", tmp_path / "s.csv",
                   "--out", tmp_path / "t.csv") == 0
        assert {r["n"] for r in csv.DictReader(open(tmp_path / "t.csv"))} == {"0.100000"}

    def test_nodata(self, tmp_path, capsys):
        export_grid_esri_ascii(FrictionGrid((0, 0), 1.0, np.full((1, 2), NODATA)), tmp_path / "g.asc")
        self._sections(tmp_path)
        assert cli("compound", "--grid", tmp_path / "g.asc", "--sections", tmp_path / "s.csv",
                   "--out", tmp_path / "t.csv") == 0
        assert {r["n"] for r in csv.DictReader(open(tmp_path / "t.csv"))} == {"0.025000"}
        assert "outside" in capsys.readouterr().err

    def test_two_texture(self, tmp_path):
        vals = np.array([[0.05, 0.05, 0.2, 0.2]])
        export_grid_esri_ascii(FrictionGrid((0, 0), 1.0, vals), tmp_path / "g.asc")
        self._sections(tmp_path)
        cli("compound", "--grid", tmp_path / "g.asc", "--sections", tmp_path / "s.csv",
            "--max-segments", 2, "--out", tmp_path / "t.csv")
        rows = list(csv.DictReader(open(tmp_path / "t.csv")))
        assert [r["n"] for r in rows] == ["0.050000", "0.200000"]
        assert rows[0]["segment_end_station"] == "2.000000"


class TestMetrics:
    def test_series(self, tmp_path, capsys):
        (tmp_path / "s.csv").write_text("index,observed,predicted\n0,1,1\n1,2,2\n2,3,5\n")
        assert cli("metrics", "--series", tmp_path / "s.csv", "--out", tmp_path / "m.json") == 0
        doc = json.loads((tmp_path / "m.json").read_text())
        assert doc["nse"] == pytest.approx(-1.0) and doc["final_abs_diff"] == 2.0
        assert json.loads(capsys.readouterr().out) == doc

    def test_identical_series(self, tmp_path, capsys):
        (tmp_path / "s.csv").write_text("index,observed,predicted\n0,1,1\n1,4,4\n")
        cli("metrics", "--series", tmp_path / "s.csv")
        doc = json.loads(capsys.readouterr().out)
        assert (doc["nse"], doc["rmse"]) == (1.0, 0.0)

    def test_masks(self, tmp_path, capsys):
        g = FrictionGrid((0, 0), 1.0, [[0.1, NODATA], [0.1, 0.1]])
        export_grid_esri_ascii(g, tmp_path / "a.asc")
        assert cli("metrics", "--masks", tmp_path / "a.asc", tmp_path / "a.asc") == 0
        doc = json.loads(capsys.readouterr().out)
        assert (doc["iou"], doc["f1"]) == (1.0, 1.0)

    def test_misaligned(self, tmp_path):
        (tmp_path / "s.csv").write_text("index,observed,predicted\n0,1,1\n1,2,\n")
        assert cli("metrics", "--series", tmp_path / "s.csv") == 3
