"""On-disk corpora shared by the CLI and acceptance tests."""

import math

import numpy as np

from snoresite.dataset import AudioClip, dump_manifest, write_wav
from snoresite.reference import fixture_manifest


def write_fixture_corpus(out_dir):
    """Quiet noise clips plus the cohort-shaped manifest; returns the manifest path."""
    periods, durations = fixture_manifest()
    rng = np.random.default_rng(0)
    for name, dur in durations.items():
        n = math.ceil(dur * 4000) + 4000
        (out_dir / name).write_bytes(write_wav(AudioClip(0.01 * rng.uniform(-1, 1, n), source_id=name)))
    path = out_dir / "manifest.csv"
    path.write_text(dump_manifest(periods))
    return path
