"""Spectral features: Hann STFT, Mel filterbank, log-Mel spectrogram, MFCC + deltas."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .dataset import SAMPLE_RATE


@dataclass(frozen=True)
class DspConfig:
    sample_rate: int = SAMPLE_RATE
    mfcc_win: int = 100
    mfcc_hop: int = 25
    n_mfcc: int = 13
    mfcc_n_mels: int = 40
    delta_width: int = 2
    melspec_win: int = 2048
    melspec_hop: int = 32
    melspec_n_mels: int = 64
    labelspec_win: int = 256
    labelspec_hop: int = 64
    fmin: float = 0.0
    fmax: float = 2000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        for name in ("mfcc_hop", "melspec_hop", "labelspec_hop"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("mfcc_win", "melspec_win", "labelspec_win"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ValueError("need 0 <= fmin < fmax <= sample_rate/2")
        if self.n_mfcc > self.mfcc_n_mels:
            raise ValueError("n_mfcc cannot exceed the number of mel bands")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SpectrogramMagnitude:
    data: np.ndarray  # frames x bins
    bin_hz: float
    hop_s: float

    @property
    def shape(self):
        return self.data.shape


def _samples(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window, w[k] = 0.5 * (1 - cos(2 pi k / n))."""
    if n < 1:
        raise ValueError("window length must be >= 1")
    if n == 1:
        return np.ones(1)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def frame_signal(signal, win: int, hop: int, center: bool) -> np.ndarray:
    x = _samples(signal)
    if center:
        pad = win // 2
        if x.size <= pad:
            raise ValueError(f"reflect padding of {pad} needs more than {pad} samples")
        x = np.pad(x, pad, mode="reflect")
    if x.size < win:
        raise ValueError(f"signal of {x.size} samples is shorter than window {win}")
    n_frames = (x.size - win) // hop + 1
    return np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n_frames]


def stft_magnitude(signal, win: int, hop: int, center: bool = False,
                   sample_rate: int = SAMPLE_RATE) -> SpectrogramMagnitude:
    """Hann-windowed STFT magnitude; frame t covers [t*hop, t*hop + win)."""
    frames = frame_signal(signal, win, hop, center) * hann_window(win)
    mag = np.abs(np.fft.rfft(frames, axis=1))
    return SpectrogramMagnitude(mag, sample_rate / win, hop / sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def _filterbank(n_fft, n_mels, sample_rate, fmin, fmax):
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    peaks = fb.max(axis=1)
    empty = np.flatnonzero(peaks <= 0)
    if empty.size:
        raise ValueError(f"{n_mels} mel bands too many for a {n_fft}-point FFT: "
                         f"band {empty[0]} covers no bin")
    fb = fb / peaks[:, None]
    fb.flags.writeable = False
    return fb


def mel_filterbank(n_fft: int, n_mels: int, sample_rate: int = SAMPLE_RATE,
                   fmin: float = 0.0, fmax: float = 2000.0) -> np.ndarray:
    """Triangular HTK-mel filters, peak-normalized, shape (n_mels, n_fft//2 + 1)."""
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ValueError("need 0 <= fmin < fmax <= sample_rate/2")
    return _filterbank(int(n_fft), int(n_mels), int(sample_rate), float(fmin), float(fmax))


def mel_spectrogram(segment, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Log-Mel energies, shape (n_mels, frames); 126 frames for a 1-s segment."""
    spec = stft_magnitude(segment, cfg.melspec_win, cfg.melspec_hop, center=True,
                          sample_rate=cfg.sample_rate)
    fb = mel_filterbank(cfg.melspec_win, cfg.melspec_n_mels, cfg.sample_rate, cfg.fmin, cfg.fmax)
    return np.log(fb @ (spec.data ** 2).T + cfg.log_floor)


def label_spectrogram(clip, cfg: DspConfig = DspConfig()) -> SpectrogramMagnitude:
    return stft_magnitude(clip, cfg.labelspec_win, cfg.labelspec_hop, center=False,
                          sample_rate=cfg.sample_rate)


@lru_cache(maxsize=8)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis; row k is coefficient k."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    m.flags.writeable = False
    return m


def mfcc_static(segment, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Frames x n_mfcc cepstra (C0 kept); 157 frames for a 1-s segment."""
    spec = stft_magnitude(segment, cfg.mfcc_win, cfg.mfcc_hop, center=False,
                          sample_rate=cfg.sample_rate)
    fb = mel_filterbank(cfg.mfcc_win, cfg.mfcc_n_mels, cfg.sample_rate, cfg.fmin, cfg.fmax)
    logmel = np.log(spec.data ** 2 @ fb.T + cfg.log_floor)
    return logmel @ dct_matrix(cfg.mfcc_n_mels)[:cfg.n_mfcc].T


def deltas(feat: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over time (axis 0) with edge replication."""
    feat = np.asarray(feat, dtype=np.float64)
    if feat.shape[0] < 1:
        raise ValueError("need at least one frame")
    padded = np.pad(feat, ((width, width), (0, 0)), mode="edge")
    t = feat.shape[0]
    out = np.zeros_like(feat)
    for n in range(1, width + 1):
        out += n * (padded[width + n:width + n + t] - padded[width - n:width - n + t])
    return out / (2 * sum(n * n for n in range(1, width + 1)))


def append_deltas(static: np.ndarray, width: int = 2) -> np.ndarray:
    d1 = deltas(static, width)
    return np.hstack([static, d1, deltas(d1, width)])


def l2_normalize_frames(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=m.copy(), where=norms > 0)


def mfcc_features(segment, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Full BiLSTM/BoAW input: static + delta + delta-delta, L2-normalized per frame."""
    return l2_normalize_frames(append_deltas(mfcc_static(segment, cfg), cfg.delta_width))


def extract(segment, kind: str, cfg: DspConfig = DspConfig()) -> np.ndarray:
    if kind == "mfcc":
        return mfcc_features(segment, cfg)
    if kind == "melspec":
        return mel_spectrogram(segment, cfg)
    raise ValueError(f"unknown feature kind {kind!r}")


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance rescaling of one feature map (constant maps go to zero)."""
    x = np.asarray(x, dtype=np.float64)
    sd = x.std()
    return (x - x.mean()) / sd if sd > 0 else np.zeros_like(x)


# --- dumps -------------------------------------------------------------------

def dump_features(segment_id: str, kind: str, data: np.ndarray) -> str:
    data = np.asarray(data, dtype=np.float64)
    return json.dumps({"segment_id": segment_id, "kind": kind, "shape": list(data.shape),
                       "data": data.ravel().tolist()})


def load_features(text: str) -> tuple[str, str, np.ndarray]:
    d = json.loads(text)
    data = np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])
    return d["segment_id"], d["kind"], data


def to_pgm(spec: np.ndarray, floor: float = 1e-10) -> bytes:
    """Frames x bins magnitude -> binary PGM, frequency ascending bottom-to-top."""
    logmag = np.log(np.asarray(spec, dtype=np.float64) + floor)
    lo, hi = logmag.min(), logmag.max()
    scaled = np.zeros_like(logmag) if hi == lo else (logmag - lo) / (hi - lo) * 255.0
    raster = np.round(scaled).astype(np.uint8).T[::-1]  # rows = bins, top row = highest bin
    h, w = raster.shape
    return f"P5\n{w} {h}\n255\n".encode() + raster.tobytes()
