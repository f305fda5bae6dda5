"""Bag-of-audio-words: k-means codebook over MFCC frames, 5-nearest multi-assignment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BoawConfig:
    size: int = 200
    assignments: int = 5
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    seed: int = 0
    log_tf: bool = False
    max_frames: int | None = None  # seeded subsample of the pooled frames for k-means

    def __post_init__(self):
        if not 1 <= self.assignments <= self.size:
            raise ValueError("need 1 <= assignments <= size")


@dataclass
class Codebook:
    centroids: np.ndarray
    seed: int = 0
    iterations: int = 0
    inertia: float = float("nan")
    inertia_history: list = field(default_factory=list)

    @property
    def size(self):
        return self.centroids.shape[0]

    @property
    def dims(self):
        return self.centroids.shape[1]

    def to_json(self) -> str:
        return json.dumps({"size": self.size, "dims": self.dims, "seed": self.seed,
                           "iterations": self.iterations, "inertia": self.inertia,
                           "centroids": self.centroids.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        d = json.loads(text)
        c = np.asarray(d["centroids"], dtype=np.float64)
        if c.shape != (d["size"], d["dims"]):
            raise ValueError(f"centroid array {c.shape} disagrees with size/dims header")
        return cls(c, int(d.get("seed", 0)), int(d.get("iterations", 0)),
                   float(d.get("inertia", "nan")))


def _sq_dists(x, c, c_sq=None):
    """Squared distances via the expanded form; only used for training."""
    if c_sq is None:
        c_sq = np.einsum("ij,ij->i", c, c)
    d = np.einsum("ij,ij->i", x, x)[:, None] - 2.0 * x @ c.T + c_sq[None, :]
    return np.maximum(d, 0.0)


def _assign(x, c, chunk=65536):
    labels = np.empty(x.shape[0], dtype=np.int64)
    mind = np.empty(x.shape[0])
    c_sq = np.einsum("ij,ij->i", c, c)
    for a in range(0, x.shape[0], chunk):
        d = _sq_dists(x[a:a + chunk], c, c_sq)
        labels[a:a + chunk] = d.argmin(axis=1)
        mind[a:a + chunk] = d[np.arange(d.shape[0]), labels[a:a + chunk]]
    return labels, mind


def kmeans_pp_init(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            raise ValueError("too few distinct frames for the requested codebook size")
        idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
        idx = min(idx, n - 1)
        while closest[idx] == 0:  # guard against landing on an exhausted point
            idx = (idx + 1) % n
        centers[j] = x[idx]
        closest = np.minimum(closest, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def build_codebook(frames, cfg: BoawConfig = BoawConfig()) -> Codebook:
    """k-means++ seeding then Lloyd iterations until centroids move less than ``tol``."""
    x = np.ascontiguousarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("frames must be a 2-D array")
    if np.unique(x, axis=0).shape[0] < cfg.size:
        raise ValueError(f"need at least {cfg.size} distinct frames, got fewer")
    rng = np.random.default_rng(cfg.seed)
    if cfg.max_frames is not None and x.shape[0] > cfg.max_frames:
        x = x[np.sort(rng.choice(x.shape[0], cfg.max_frames, replace=False))]
    centers = kmeans_pp_init(x, cfg.size, rng)

    history = []
    iterations = 0
    for iterations in range(1, cfg.kmeans_max_iters + 1):
        labels, mind = _assign(x, centers)
        history.append(float(mind.sum()))
        if len(history) > 1 and history[-1] > history[-2] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"k-means inertia increased at iteration {iterations}")

        sums = np.stack([np.bincount(labels, weights=x[:, j], minlength=cfg.size)
                         for j in range(x.shape[1])], axis=1)
        counts = np.bincount(labels, minlength=cfg.size)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        if not filled.all():
            # reseed each empty cluster with the point worst served by its centroid
            resid = mind.copy()
            for j in np.flatnonzero(~filled):
                far = int(resid.argmax())
                new[j] = x[far]
                resid[far] = -1.0
        shift = np.sqrt(np.max(np.sum((new - centers) ** 2, axis=1)))
        centers = new
        if shift < cfg.kmeans_tol:
            break

    _, mind = _assign(x, centers)
    history.append(float(mind.sum()))
    return Codebook(centers, cfg.seed, iterations, history[-1], history)


def nearest_k(frame, codebook, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest codewords, ties broken by lower index."""
    c = getattr(codebook, "centroids", codebook)
    d = np.sum((c - np.asarray(frame, dtype=np.float64)) ** 2, axis=1)
    return np.argsort(d, kind="stable")[:k]


def assignment_counts(features, codebook: Codebook, assignments: int) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != codebook.dims:
        raise ValueError(f"feature width {f.shape[-1]} != codebook dims {codebook.dims}")
    d = np.sum((f[:, None, :] - codebook.centroids[None, :, :]) ** 2, axis=2)
    chosen = np.argsort(d, axis=1, kind="stable")[:, :assignments]
    return np.bincount(chosen.ravel(), minlength=codebook.size).astype(np.float64)


def encode_boaw(features, codebook: Codebook, cfg: BoawConfig = BoawConfig()) -> np.ndarray:
    counts = assignment_counts(features, codebook, cfg.assignments)
    if cfg.log_tf:
        counts = np.log1p(counts)
    norm = np.linalg.norm(counts)
    return counts / norm if norm > 0 else counts
