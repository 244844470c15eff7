"""Training corpus synthesis: random subsamples and point-weighted blends.

Every emitted sample is zero-origin normalized. A blended sample
concatenates two subsamples and takes the point-count-weighted mean of
their labels, so label mass is conserved under repeated blending.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, CorpusError, ParseError
from .pointcloud import PointCloud, zero_origin

@dataclass(frozen=True)
class LabeledSample:
    cloud: PointCloud
    target_n: float
    provenance: Tuple[Tuple[str, int], ...]
    split: str = "train"

    def __len__(self):
        return len(self.cloud)


@dataclass(frozen=True)
class CorpusSpec:
    samples_per_region: int = 10_000
    blend_fraction: float = 0.5
    seed: int = 0
    size_range: Tuple[int, int] = (3, 100)
    center_substitution: Tuple[str, ...] = ()
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        object.__setattr__(self, "size_range", tuple(int(s) for s in self.size_range))
        object.__setattr__(self, "center_substitution", tuple(self.center_substitution))
        object.__setattr__(self, "split_fractions", tuple(float(f) for f in self.split_fractions))
        lo, hi = self.size_range
        if lo < 3 or hi < lo:
            raise ArgumentError("size_range needs 3 <= min <= max")
        if not 0 <= self.blend_fraction <= 1:
            raise ArgumentError("blend_fraction must lie in [0, 1]")
        if self.samples_per_region < 0:
            raise ArgumentError("samples_per_region must be >= 0")
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1) > 1e-9:
            raise ArgumentError("split_fractions must be three values summing to 1")

    def to_dict(self):
        d = asdict(self)
        for k in ("size_range", "center_substitution", "split_fractions"):
            d[k] = list(d[k])
        return d


def subsample(cloud, k, rng) -> PointCloud:
    """Draw ``k`` distinct points uniformly without replacement."""
    xyz = getattr(cloud, "xyz", cloud)
    if k < 3:
        raise ArgumentError("subsample size must be at least 3")
    if k > len(xyz):
        raise ArgumentError(f"cannot draw {k} points from a {len(xyz)}-point cloud")
    idx = rng.choice(len(xyz), size=k, replace=False)
    if isinstance(cloud, PointCloud):
        return cloud.with_xyz(xyz[idx])
    return PointCloud(xyz[idx])


def labeled(cloud, target_n, region_id, split="train") -> LabeledSample:
    """Wrap a raw subsample as a normalized single-region sample."""
    xyz = zero_origin(getattr(cloud, "xyz", cloud))
    src = getattr(cloud, "source", "synthetic")
    return LabeledSample(PointCloud(xyz, source=src), float(target_n),
                         ((region_id, len(xyz)),), split)


def blend_target(n_a, size_a, n_b, size_b):
    t = (n_a * size_a + n_b * size_b) / (size_a + size_b)
    # rounding may land one ulp outside the operands
    return min(max(t, min(n_a, n_b)), max(n_a, n_b))


def blend(a: LabeledSample, b: LabeledSample) -> LabeledSample:
    """Merge two samples; the label is the point-weighted mean of both."""
    xyz = zero_origin(np.concatenate([a.cloud.xyz, b.cloud.xyz], axis=0))
    target = blend_target(a.target_n, len(a), b.target_n, len(b))
    return LabeledSample(PointCloud(xyz, source=a.cloud.source), target,
                         a.provenance + b.provenance, a.split)


def substitute_center(region_n: Mapping[str, float], slabs) -> Dict[str, float]:
    """Reuse each listed slab's Center value for its Left and Right zones.

    Region ids follow ``<slab>-<zone>``.
    """
    out = dict(region_n)
    for slab in slabs:
        center = f"{slab}-Center"
        if center not in out:
            raise CorpusError(f"no Center region for slab {slab!r}", region_id=center)
        for zone in ("Left", "Right"):
            rid = f"{slab}-{zone}"
            if rid in out:
                out[rid] = out[center]
    return out


def _split_for(seed, index, fractions):
    digest = hashlib.sha256(f"{seed}:{index}".encode()).digest()
    u = int.from_bytes(digest[:8], "little") / 2.0 ** 64
    if u < fractions[0]:
        return "train"
    if u < fractions[0] + fractions[1]:
        return "val"
    return "test"


def build_corpus(regions: Mapping[str, Tuple[PointCloud, object]],
                 spec: CorpusSpec) -> List[LabeledSample]:
    """Generate a corpus from region clouds and their Manning's n.

    ``regions`` maps region id to ``(cloud, n)`` where ``n`` is a float or a
    :class:`~pcfriction.flume.RegionN`. Regions are visited in sorted id
    order. The corpus holds ``samples_per_region`` plain subsamples per
    region followed by ``round(blend_fraction * plain_count)`` blends of two
    fresh subsamples whose regions are drawn uniformly with replacement.

    Sample ``i`` draws from its own generator seeded with ``(seed, i)``, so
    the output is the same however the work is scheduled.
    """
    lo, hi = spec.size_range
    ids = sorted(regions)
    if not ids:
        raise CorpusError("no regions given")
    clouds, labels = {}, {}
    for rid in ids:
        cloud, n = regions[rid]
        n = getattr(n, "n", n)
        if len(cloud) < hi:
            raise CorpusError(
                f"region {rid!r} has {len(cloud)} points, needs at least {hi}", region_id=rid)
        clouds[rid] = cloud
        labels[rid] = float(n)
    labels = substitute_center(labels, spec.center_substitution)

    samples = []
    index = 0
    for rid in ids:
        for _ in range(spec.samples_per_region):
            rng = np.random.default_rng([spec.seed, index])
            k = int(rng.integers(lo, hi + 1))
            split = _split_for(spec.seed, index, spec.split_fractions)
            samples.append(labeled(subsample(clouds[rid], k, rng), labels[rid], rid, split))
            index += 1
    n_blend = int(round(spec.blend_fraction * len(samples)))
    for _ in range(n_blend):
        rng = np.random.default_rng([spec.seed, index])
        ra, rb = (ids[i] for i in rng.integers(0, len(ids), size=2))
        split = _split_for(spec.seed, index, spec.split_fractions)
        parts = []
        for rid in (ra, rb):
            k = int(rng.integers(lo, hi + 1))
            parts.append(labeled(subsample(clouds[rid], k, rng), labels[rid], rid, split))
        samples.append(blend(*parts))
        index += 1
    return samples


# -- manifest I/O -----------------------------------------------------------

def _record(i, s: LabeledSample):
    return {
        "index": i,
        "points": s.cloud.xyz.tolist(),
        "target_n": s.target_n,
        "provenance": [[rid, int(k)] for rid, k in s.provenance],
        "split": s.split,
    }


def write_manifest(samples: Sequence[LabeledSample], path, spec: CorpusSpec, extra=None):
    """JSON lines: one header record then one record per sample."""
    header = {"type": "header", "spec": spec.to_dict(), "seed": spec.seed,
              "n_samples": len(samples)}
    if extra:
        header.update(extra)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, s in enumerate(samples):
            fh.write(json.dumps(_record(i, s), sort_keys=True) + "\n")


def read_manifest(path):
    """Return ``(header, samples)``; malformed lines raise ParseError with the line number."""
    header = None
    samples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if lineno == 1:
                    if rec.get("type") != "header":
                        raise ValueError("first line is not a corpus header")
                    header = rec
                    continue
                xyz = np.asarray(rec["points"], dtype=np.float64).reshape(-1, 3)
                prov = tuple((str(r), int(k)) for r, k in rec["provenance"])
                samples.append(LabeledSample(PointCloud(xyz), float(rec["target_n"]), prov,
                                             rec.get("split", "train")))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}: corrupt manifest record ({exc})", line=lineno) from None
    if header is None:
        raise ParseError(f"{path}: missing corpus header", line=1)
    return header, samples


def split_samples(samples):
    """Partition samples by their ``split`` tag into train, val and test lists."""
    out = {"train": [], "val": [], "test": []}
    for s in samples:
        out.setdefault(s.split, []).append(s)
    return out["train"], out["val"], out["test"]
