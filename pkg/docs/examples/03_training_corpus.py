"""Build an augmented training corpus from region scans.

Each region contributes random subsamples of 3 to 100 points labelled
with its n. Blends then join two subsamples and take the point-weighted
mean of their labels.
"""
import tempfile
from collections import Counter
from pathlib import Path

import numpy as np

from pcfriction.augment import CorpusSpec, build_corpus, read_manifest, write_manifest
from pcfriction.synthetic import demo_region_n, n_to_amplitude, texture_cloud

region_n = demo_region_n()
regions = {}
for i, (rid, n) in enumerate(sorted(region_n.items())):
    cloud = texture_cloud(float(n_to_amplitude(n)), 1500, np.random.default_rng(i))
    regions[rid] = (cloud, n)

spec = CorpusSpec(samples_per_region=200, blend_fraction=0.5, seed=42)
corpus = build_corpus(regions, spec)
plain = [s for s in corpus if len(s.provenance) == 1]
blends = [s for s in corpus if len(s.provenance) == 2]
print(f"{len(plain)} plain samples + {len(blends)} blends = {len(corpus)}")
print("split sizes:", dict(Counter(s.split for s in corpus)))

s = blends[0]
(ra, ka), (rb, kb) = s.provenance
print(f"\nexample blend: {ka} pts of {ra} (n={region_n[ra]:.4f}) + "
      f"{kb} pts of {rb} (n={region_n[rb]:.4f}) -> target {s.target_n:.4f}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "corpus.jsonl"
    write_manifest(corpus, path, spec)
    header, back = read_manifest(path)
    print(f"manifest: {path.stat().st_size / 1e6:.1f} MB, seed {header['seed']}, "
          f"{len(back)} records reloaded")
