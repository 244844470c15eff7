import hashlib
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pcfriction.augment import (
    CorpusSpec,
    blend,
    build_corpus,
    labeled,
    read_manifest,
    split_samples,
    subsample,
    substitute_center,
    write_manifest,
)
from pcfriction.errors import ArgumentError, CorpusError, ParseError
from pcfriction.pointcloud import PointCloud


def cloud(n, seed=0):
    return PointCloud(np.random.default_rng(seed).uniform(0, 1, (n, 3)))


def sample(n_points, target, seed=0, region="R"):
    return labeled(cloud(n_points, seed), target, region)


class TestSubsample:
    def test_exhaustive_is_permutation(self):
        c = cloud(12)
        out = subsample(c, 12, np.random.default_rng(1))
        assert sorted(map(tuple, out.xyz)) == sorted(map(tuple, c.xyz))

    def test_distinct(self):
        c = cloud(10)
        out = subsample(c, 3, np.random.default_rng(2))
        assert len(set(map(tuple, out.xyz))) == 3
        assert set(map(tuple, out.xyz)) <= set(map(tuple, c.xyz))

    @pytest.mark.parametrize("k", [2, 11])
    def test_bounds(self, k):
        with pytest.raises(ArgumentError):
            subsample(cloud(10), k, np.random.default_rng(0))

    def test_inclusion_frequency(self):
        # Monte Carlo: each of 50 points should appear in 5/50 of draws
        xyz = np.column_stack([np.arange(50.0), np.zeros(50), np.zeros(50)])
        c = PointCloud(xyz)
        rng = np.random.default_rng(3)
        counts = np.zeros(50)
        for _ in range(10_000):
            counts[subsample(c, 5, rng).xyz[:, 0].astype(int)] += 1
        freq = counts / 10_000
        assert np.all(np.abs(freq - 0.1) <= 0.01)


class TestBlend:
    def test_equal_labels(self):
        assert blend(sample(7, 0.1), sample(40, 0.1, 1)).target_n == 0.1

    def test_worked_value(self):
        out = blend(sample(10, 0.05), sample(30, 0.15, 1))
        assert out.target_n == pytest.approx(0.125, rel=1e-15)
        assert len(out) == 40

    def test_symmetry(self):
        a, b = sample(10, 0.05, 0, "A"), sample(23, 0.19, 1, "B")
        ab, ba = blend(a, b), blend(b, a)
        assert ab.target_n == ba.target_n
        assert sorted(map(tuple, ab.cloud.xyz)) == sorted(map(tuple, ba.cloud.xyz))

    def test_provenance(self):
        out = blend(sample(10, 0.05, 0, "A"), sample(5, 0.2, 1, "B"))
        assert out.provenance == (("A", 10), ("B", 5))

    def test_normalized(self):
        out = blend(sample(10, 0.05), sample(5, 0.2, 1))
        assert np.all(out.cloud.xyz.min(axis=0) == 0)

    @given(st.lists(st.tuples(st.integers(3, 100), st.floats(0.025, 0.25)), min_size=2, max_size=5))
    def test_label_conservation(self, parts):
        samples = [sample(k, n, i) for i, (k, n) in enumerate(parts)]
        acc = samples[0]
        for s in samples[1:]:
            acc = blend(acc, s)
        # exact rational weighted mean of the original labels
        exact = sum(Fraction(n) * k for k, n in parts) / sum(k for k, _ in parts)
        assert acc.target_n == pytest.approx(float(exact), rel=1e-12)
        assert len(acc) == sum(k for k, _ in parts)

    @given(st.integers(3, 100), st.floats(0.025, 0.25), st.integers(3, 100), st.floats(0.025, 0.25))
    def test_convexity(self, ka, na, kb, nb):
        t = blend(sample(ka, na), sample(kb, nb, 1)).target_n
        assert min(na, nb) <= t <= max(na, nb)


def regions_fixture(n_regions=9, points=150):
    ids = [f"{s}-{z}" for s in ("Rough", "Medium", "Smooth") for z in ("Left", "Center", "Right")]
    return {rid: (cloud(points, i), 0.03 + 0.02 * i) for i, rid in enumerate(ids[:n_regions])}


class TestBuildCorpus:
    def test_no_blend_targets_are_region_values(self):
        regions = regions_fixture()
        corpus = build_corpus(regions, CorpusSpec(samples_per_region=20, blend_fraction=0, seed=1))
        labels = {n for _, n in regions.values()}
        assert len(corpus) == 180
        assert all(s.target_n in labels for s in corpus)

    def test_count_and_hull(self):
        regions = regions_fixture()
        spec = CorpusSpec(samples_per_region=1000, blend_fraction=0.5, seed=4)
        corpus = build_corpus(regions, spec)
        assert len(corpus) == 13_500
        labels = {rid: n for rid, (_, n) in regions.items()}
        for s in corpus[9000:]:
            (ra, ka), (rb, kb) = s.provenance
            lo, hi = sorted((labels[ra], labels[rb]))
            assert lo <= s.target_n <= hi
            assert 6 <= len(s) <= 200
            assert ka + kb == len(s)
        for s in corpus[:9000]:
            assert 3 <= len(s) <= 100
            assert np.all(s.cloud.xyz.min(axis=0) == 0)

    def test_deterministic_manifest(self, tmp_path):
        spec = CorpusSpec(samples_per_region=30, blend_fraction=0.5, seed=9)
        digests = []
        for name in ("a.jsonl", "b.jsonl"):
            write_manifest(build_corpus(regions_fixture(), spec), tmp_path / name, spec)
            digests.append(hashlib.sha256((tmp_path / name).read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_seed_changes_corpus(self):
        a = build_corpus(regions_fixture(3), CorpusSpec(samples_per_region=5, seed=1))
        b = build_corpus(regions_fixture(3), CorpusSpec(samples_per_region=5, seed=2))
        assert any(not np.array_equal(x.cloud.xyz, y.cloud.xyz) for x, y in zip(a, b))

    def test_undersized_region_named(self):
        regions = regions_fixture(3)
        regions["Medium-Left"] = (cloud(50), 0.1)
        with pytest.raises(CorpusError) as exc:
            build_corpus(regions, CorpusSpec(samples_per_region=2))
        assert exc.value.region_id == "Medium-Left"

    def test_center_substitution(self):
        regions = regions_fixture()
        spec = CorpusSpec(samples_per_region=3, blend_fraction=0, center_substitution=("Rough",))
        corpus = build_corpus(regions, spec)
        center = regions["Rough-Center"][1]
        for s in corpus:
            if s.provenance[0][0].startswith("Rough"):
                assert s.target_n == center
        assert substitute_center({"Rough-Left": 1.0, "Rough-Center": 2.0}, ["Rough"]) == \
            {"Rough-Left": 2.0, "Rough-Center": 2.0}

    def test_split_fractions(self):
        spec = CorpusSpec(samples_per_region=1000, blend_fraction=0, seed=0)
        corpus = build_corpus(regions_fixture(2), spec)
        counts = Counter(s.split for s in corpus)
        assert abs(counts["train"] / 2000 - 0.8) < 0.04
        assert abs(counts["val"] / 2000 - 0.1) < 0.03
        tr, va, te = split_samples(corpus)
        assert len(tr) + len(va) + len(te) == 2000

    def test_index_seeded_generators(self):
        # a sample's content depends only on (seed, index), not on region count
        spec = CorpusSpec(samples_per_region=4, blend_fraction=0, seed=3)
        a = build_corpus(regions_fixture(2), spec)
        b = build_corpus(regions_fixture(3), spec)
        for x, y in zip(a, b[:8]):
            assert np.array_equal(x.cloud.xyz, y.cloud.xyz)


class TestManifest:
    def test_round_trip(self, tmp_path):
        spec = CorpusSpec(samples_per_region=5, seed=2)
        corpus = build_corpus(regions_fixture(3), spec)
        write_manifest(corpus, tmp_path / "c.jsonl", spec)
        header, back = read_manifest(tmp_path / "c.jsonl")
        assert header["seed"] == 2 and header["spec"]["samples_per_region"] == 5
        assert len(back) == len(corpus)
        for a, b in zip(corpus, back):
            assert np.array_equal(a.cloud.xyz, b.cloud.xyz)
            assert a.target_n == b.target_n
            assert a.provenance == b.provenance and a.split == b.split

    def test_corrupt_line_number(self, tmp_path):
        spec = CorpusSpec(samples_per_region=2, seed=2)
        write_manifest(build_corpus(regions_fixture(2), spec), tmp_path / "c.jsonl", spec)
        lines = (tmp_path / "c.jsonl").read_text().splitlines()
        lines[3] = lines[3][:20]
        (tmp_path / "c.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as exc:
            read_manifest(tmp_path / "c.jsonl")
        assert exc.value.line == 4
