"""Audio I/O, VOTE labels, manifests, 1-second segmentation and dataset splits."""

from __future__ import annotations

import csv
import io
import json
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 4000
SEGMENT_SAMPLES = SAMPLE_RATE

SITES = "VOTE"
NON_SNORE = "N"
OBSERVED_LABELS = ("N", "V", "O", "T", "E", "VO", "VT", "OT", "OE", "VOT")

_PCM_GUID_TAIL = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"


class WavError(ValueError):
    """Base class for WAV decoding problems."""


class MalformedRiffError(WavError):
    pass


class UnsupportedCodecError(WavError):
    pass


class ChannelCountError(WavError):
    pass


class SampleRateError(WavError):
    pass


class BitDepthError(WavError):
    pass


class LabelError(ValueError):
    pass


class ManifestError(ValueError):
    pass


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("clip must be a non-empty mono signal")
        if self.sample_rate != SAMPLE_RATE:
            raise SampleRateError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)) or np.max(np.abs(samples)) > 1.0:
            raise ValueError("samples must be finite and within [-1, 1]")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, order=False)
class VoteLabel:
    """A VOTE obstruction label: a nonempty set of sites, or the non-snore class N."""

    sites: frozenset = frozenset()
    is_non_snore: bool = False

    def __post_init__(self):
        sites = frozenset(self.sites)
        if bool(sites) == bool(self.is_non_snore):
            raise LabelError("label needs sites xor the non-snore flag")
        if not sites <= set(SITES):
            raise LabelError(f"unknown sites {sorted(sites - set(SITES))}")
        object.__setattr__(self, "sites", sites)

    def __str__(self):
        if self.is_non_snore:
            return NON_SNORE
        return "".join(s for s in SITES if s in self.sites)

    def __repr__(self):
        return f"VoteLabel({str(self)!r})"

    @property
    def sort_key(self) -> tuple:
        # N first, then by number of sites, then site order V<O<T<E.
        if self.is_non_snore:
            return (0, ())
        return (len(self.sites), tuple(SITES.index(s) for s in str(self)))

    def __lt__(self, other):
        return self.sort_key < other.sort_key


def parse_label(text: str) -> VoteLabel:
    chars = set(text.strip().upper())
    if not chars:
        raise LabelError("empty label")
    bad = chars - set(SITES + NON_SNORE)
    if bad:
        raise LabelError(f"label {text!r} has characters outside V/O/T/E/N")
    if NON_SNORE in chars:
        if len(chars) > 1:
            raise LabelError(f"label {text!r} mixes N with obstruction sites")
        return VoteLabel(is_non_snore=True)
    label = VoteLabel(frozenset(chars))
    if str(label) not in OBSERVED_LABELS:
        warnings.warn(f"label {label} is outside the nine observed VOTE classes", stacklevel=2)
    return label


def canonical_classes(labels) -> list[VoteLabel]:
    """Distinct labels sorted in canonical table order (N, V, O, T, E, VO, ...)."""
    return sorted(set(labels), key=lambda l: l.sort_key)


# --- WAV ---------------------------------------------------------------------

def read_wav(data: bytes, source_id: str = "") -> AudioClip:
    """Decode a mono 16-bit PCM 4 kHz RIFF/WAVE file; samples are scaled by 1/32768."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedRiffError("missing RIFF/WAVE header")
    pos = 12
    fmt = None
    pcm = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise MalformedRiffError(f"chunk {chunk_id!r} truncated")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            pcm = body
            if fmt is not None:
                break
        pos += 8 + size + (size & 1)
    if fmt is None or len(fmt) < 16:
        raise MalformedRiffError("missing or short fmt chunk")
    if pcm is None:
        raise MalformedRiffError("missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == 0xFFFE:
        if len(fmt) < 40 or fmt[26:40] != _PCM_GUID_TAIL or struct.unpack("<H", fmt[24:26])[0] != 1:
            raise UnsupportedCodecError("extensible format with non-PCM sub-format")
    elif tag != 1:
        raise UnsupportedCodecError(f"format tag {tag:#x} is not integer PCM")
    if channels != 1:
        raise ChannelCountError(f"expected mono, got {channels} channels")
    if rate != SAMPLE_RATE:
        raise SampleRateError(f"expected {SAMPLE_RATE} Hz, got {rate}")
    if bits != 16:
        raise BitDepthError(f"expected 16-bit samples, got {bits}")
    if len(pcm) % 2:
        raise MalformedRiffError("odd-length 16-bit data chunk")

    ints = np.frombuffer(pcm, dtype="<i2")
    if ints.size == 0:
        raise MalformedRiffError("empty data chunk")
    return AudioClip(ints.astype(np.float64) / 32768.0, SAMPLE_RATE, source_id)


def to_pcm16(samples) -> np.ndarray:
    ints = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(ints, -32768, 32767).astype("<i2")


def write_wav(clip: AudioClip) -> bytes:
    payload = to_pcm16(clip.samples).tobytes()
    fmt = struct.pack("<HHIIHH", 1, 1, SAMPLE_RATE, SAMPLE_RATE * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


# --- manifest and segmentation ------------------------------------------------

@dataclass(frozen=True)
class LabeledPeriod:
    clip_ref: str
    start_s: float
    end_s: float
    label: VoteLabel

    def __post_init__(self):
        if not (0 <= self.start_s < self.end_s):
            raise ValueError(f"bad period [{self.start_s}, {self.end_s})")


@dataclass(frozen=True, eq=False)
class Segment:
    samples: np.ndarray
    label: VoteLabel
    origin: tuple = ("", 0.0)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.shape != (SEGMENT_SAMPLES,):
            raise ValueError(f"segment must hold exactly {SEGMENT_SAMPLES} samples")
        if not np.all(np.isfinite(samples)) or np.max(np.abs(samples)) > 1.0:
            raise ValueError("samples must be finite and within [-1, 1]")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)


MANIFEST_HEADER = ("clip", "start_s", "end_s", "label")


def load_manifest(text: str) -> list[LabeledPeriod]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in MANIFEST_HEADER if c not in (reader.fieldnames or [])]
    if missing:
        raise ManifestError(f"manifest missing columns: {', '.join(missing)}")
    periods = []
    for lineno, row in enumerate(reader, start=2):
        try:
            start, end = float(row["start_s"]), float(row["end_s"])
        except (TypeError, ValueError):
            raise ManifestError(f"line {lineno}: unparsable time") from None
        if not (math.isfinite(start) and math.isfinite(end)) or start < 0 or start >= end:
            raise ManifestError(f"line {lineno}: need 0 <= start_s < end_s, got {start}, {end}")
        try:
            label = parse_label(row["label"] or "")
        except LabelError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from None
        periods.append(LabeledPeriod(row["clip"], start, end, label))
    return periods


def dump_manifest(periods) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for p in periods:
        writer.writerow([p.clip_ref, repr(float(p.start_s)), repr(float(p.end_s)), str(p.label)])
    return out.getvalue()


def segment_periods(clip: AudioClip, periods) -> list[Segment]:
    """Cut each period into consecutive 1-s windows from its start, dropping the tail."""
    segments = []
    n = clip.samples.size
    for p in periods:
        start = int(round(p.start_s * SAMPLE_RATE))
        end = int(round(p.end_s * SAMPLE_RATE))
        if end > n:
            raise SegmentationError(
                f"period {p.start_s}-{p.end_s}s exceeds clip {clip.source_id!r} ({clip.duration}s)")
        for k in range((end - start) // SEGMENT_SAMPLES):
            a = start + k * SEGMENT_SAMPLES
            segments.append(Segment(clip.samples[a:a + SEGMENT_SAMPLES], p.label,
                                    (p.clip_ref, a / SAMPLE_RATE)))
    return segments


# --- split -------------------------------------------------------------------

@dataclass
class DatasetSplit:
    train: list[int]
    validation: list[int]
    test: list[int]
    seed: int
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "train": self.train,
                           "validation": self.validation, "test": self.test}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        d = json.loads(text)
        return cls([int(i) for i in d["train"]], [int(i) for i in d["validation"]],
                   [int(i) for i in d["test"]], int(d["seed"]))


def split_dataset(labels, seed: int) -> DatasetSplit:
    """Stratified split: per class floor(n/10) to test, then floor(rest/10) to validation.

    ``labels`` may be Segments or VoteLabels; indices refer to positions in it.
    """
    labels = [getattr(x, "label", x) for x in labels]
    if not labels:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for cls in canonical_classes(labels):
        members = np.array([i for i, l in enumerate(labels) if l == cls], dtype=np.int64)
        if members.size < 10:
            warnings.warn(f"class {cls} has only {members.size} segments; it gets no test share",
                          stacklevel=2)
        members = members[rng.permutation(members.size)]
        n_test = members.size // 10
        n_val = (members.size - n_test) // 10
        test.extend(members[:n_test].tolist())
        val.extend(members[n_test:n_test + n_val].tolist())
        train.extend(members[n_test + n_val:].tolist())
    return DatasetSplit(sorted(train), sorted(val), sorted(test), seed)


def label_counts(labels) -> dict[str, int]:
    labels = [getattr(x, "label", x) for x in labels]
    return {str(c): sum(1 for l in labels if l == c) for c in canonical_classes(labels)}
