"""Deterministic synthetic snore segments with class-separable spectra.

The site signatures are invented.  They order fundamentals V < O < T < E so
that every class has a distinct, checkable spectral fingerprint; they carry no
clinical meaning and are only there to make the pipeline falsifiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import (AudioClip, LabeledPeriod, SAMPLE_RATE, SEGMENT_SAMPLES, Segment,
                      VoteLabel, dump_manifest, parse_label, write_wav)
from .reference import SEGMENT_COUNTS

NYQUIST = SAMPLE_RATE / 2


@dataclass(frozen=True)
class SiteSignature:
    site: str
    f0: float
    harmonics: int
    rolloff: float      # gain ratio between consecutive harmonics
    am_rate: float      # Hz
    noise_band: tuple   # (low Hz, high Hz, gain)

    def __post_init__(self):
        lo, hi, _ = self.noise_band
        if not (0 < self.f0 < NYQUIST and 0 < lo < hi < NYQUIST):
            raise ValueError(f"signature {self.site}: frequencies must lie in (0, {NYQUIST}) Hz")


DEFAULT_SIGNATURES = {
    "V": SiteSignature("V", 110.0, 4, 0.5, 3.0, (60.0, 400.0, 0.05)),
    "O": SiteSignature("O", 250.0, 4, 0.55, 5.0, (300.0, 800.0, 0.05)),
    "T": SiteSignature("T", 420.0, 3, 0.5, 7.0, (700.0, 1300.0, 0.05)),
    "E": SiteSignature("E", 650.0, 2, 0.45, 9.0, (1200.0, 1900.0, 0.05)),
}
F0_JITTER = 0.03
PEAK = 0.9

BALANCED_LABELS = ("V", "O", "T", "E", "VO", "VT", "OT", "OE", "VOT")


@dataclass
class SynthPlan:
    counts: dict = field(default_factory=lambda: {l: 200 for l in BALANCED_LABELS})
    seed: int = 0
    signatures: dict = field(default_factory=lambda: dict(DEFAULT_SIGNATURES))

    def __post_init__(self):
        if any(int(c) < 0 for c in self.counts.values()):
            raise ValueError("segment counts must be >= 0")

    @classmethod
    def cohort(cls, total=None, seed=0, include_n=True):
        """Class proportions of the reference cohort, optionally rescaled to ``total``."""
        counts = {k: v for k, v in SEGMENT_COUNTS.items() if include_n or k != "N"}
        if total is not None:
            s = sum(counts.values())
            counts = {k: max(1, round(v * total / s)) for k, v in counts.items()}
        return cls(counts, seed)


def _label_code(label: VoteLabel) -> int:
    if label.is_non_snore:
        return 16
    return sum(1 << "VOTE".index(s) for s in label.sites)


def segment_seed(plan_seed: int, label: VoteLabel, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(plan_seed), _label_code(label), int(index)])


def _band_noise(rng, lo, hi, n=SEGMENT_SAMPLES):
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (np.sqrt(np.mean(x * x)) + 1e-12)


def _site_signal(sig: SiteSignature, rng, t):
    f0 = sig.f0 * (1.0 + rng.uniform(-F0_JITTER, F0_JITTER))
    tone = np.zeros_like(t)
    for h in range(1, sig.harmonics + 1):
        if h * f0 >= NYQUIST:
            break
        tone += sig.rolloff ** (h - 1) * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
    env = 0.6 + 0.4 * np.sin(2 * np.pi * sig.am_rate * t + rng.uniform(0, 2 * np.pi))
    lo, hi, gain = sig.noise_band
    return tone * env + gain * _band_noise(rng, lo, hi)


def synth_samples(label: VoteLabel, seed, signatures=None) -> np.ndarray:
    signatures = DEFAULT_SIGNATURES if signatures is None else signatures
    rng = np.random.default_rng(seed)
    t = np.arange(SEGMENT_SAMPLES) / SAMPLE_RATE
    if label.is_non_snore:
        # breathing murmur: broadband noise under a slow respiratory envelope
        env = 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.2, 0.4) * t + rng.uniform(0, 2 * np.pi))
        x = env * _band_noise(rng, 100.0, 1500.0)
    else:
        x = np.zeros(SEGMENT_SAMPLES)
        for site in "VOTE":
            if site in label.sites:
                x += _site_signal(signatures[site], rng, t)
    return PEAK * x / np.max(np.abs(x))


def synth_segment(label, seed, signatures=None) -> Segment:
    """One 4000-sample segment, deterministic per (label, seed)."""
    label = parse_label(label) if isinstance(label, str) else label
    return Segment(synth_samples(label, seed, signatures), label, (f"synth:{label}", 0.0))


def synth_dataset(plan: SynthPlan) -> list[Segment]:
    """Segments grouped by label in plan order, ``counts[label]`` of each."""
    segments = []
    for text, count in plan.counts.items():
        label = parse_label(text)
        for i in range(int(count)):
            samples = synth_samples(label, segment_seed(plan.seed, label, i), plan.signatures)
            segments.append(Segment(samples, label, (f"synth_{label}_{i:05d}.wav", 0.0)))
    return segments


def write_synth_corpus(plan: SynthPlan, out_dir) -> str:
    """Write one WAV per segment plus ``manifest.csv``; returns the manifest text."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    periods = []
    for seg in synth_dataset(plan):
        name = seg.origin[0]
        (out / name).write_bytes(write_wav(AudioClip(seg.samples, SAMPLE_RATE, name)))
        periods.append(LabeledPeriod(name, 0.0, 1.0, seg.label))
    text = dump_manifest(periods)
    (out / "manifest.csv").write_text(text)
    return text
