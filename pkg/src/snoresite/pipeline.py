"""Pipeline configuration, on-disk stores, and model-agnostic train/predict helpers."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import dsp
from .boaw import BoawConfig, Codebook, build_codebook, encode_boaw
from .dataset import (AudioClip, DatasetSplit, Segment, canonical_classes, label_counts,
                      load_manifest, parse_label, read_wav, segment_periods, split_dataset,
                      write_wav)
from .dsp import DspConfig
from .nn import BiLSTMClassifier, ResNet, ResNetConfig, TrainConfig, fit, predict_logits
from .nn.train import load_checkpoint, save_checkpoint
from .svm import LinearSvmModel, SvmConfig, svm_decision, svm_train

MODEL_KINDS = ("svm", "bilstm", "resnet")
FEATURE_KIND = {"svm": "mfcc", "bilstm": "mfcc", "resnet": "melspec"}


def _build(cls, data):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass
class PipelineConfig:
    seed: int = 0
    include_n: bool = False
    workers: int = 1
    dsp: DspConfig = field(default_factory=DspConfig)
    boaw: BoawConfig = field(default_factory=BoawConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    resnet: ResNetConfig = field(default_factory=ResNetConfig)
    bilstm_hidden: int = 64
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        sections = {"dsp": DspConfig, "boaw": BoawConfig, "svm": SvmConfig,
                    "resnet": ResNetConfig, "train": TrainConfig}
        for key, sub in sections.items():
            if key in d:
                d[key] = _build(sub, d[key])
        return _build(cls, d)

    def to_dict(self):
        d = asdict(self)
        d["resnet"]["blocks"] = list(self.resnet.blocks)
        return d


# --- segment store: <dir>/index.csv, <dir>/split.json, <dir>/wav/<id>.wav -------

INDEX_HEADER = ("segment_id", "clip", "offset_s", "label")


def segment_manifest(manifest_text, wav_dir):
    """Load every referenced clip and truncate its periods into 1-s segments."""
    periods = load_manifest(manifest_text)
    if not periods:
        raise ValueError("manifest has no periods")
    by_clip = {}
    for p in periods:
        by_clip.setdefault(p.clip_ref, []).append(p)
    segments = []
    for clip_ref in sorted(by_clip):
        path = Path(wav_dir) / clip_ref
        clip = read_wav(path.read_bytes(), clip_ref)
        segments.extend(segment_periods(clip, sorted(by_clip[clip_ref], key=lambda p: p.start_s)))
    return segments


def write_segment_store(segments, out_dir, split: DatasetSplit):
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(INDEX_HEADER)
    for i, seg in enumerate(segments):
        sid = f"seg_{i:05d}"
        (out / "wav" / f"{sid}.wav").write_bytes(write_wav(AudioClip(seg.samples, source_id=sid)))
        writer.writerow([sid, seg.origin[0], repr(float(seg.origin[1])), str(seg.label)])
    (out / "index.csv").write_text(buf.getvalue())
    (out / "split.json").write_text(split.to_json() + "\n")


@dataclass
class SegmentStore:
    root: Path
    ids: list
    labels: list
    split: DatasetSplit

    @classmethod
    def open(cls, root):
        root = Path(root)
        rows = list(csv.DictReader(io.StringIO((root / "index.csv").read_text())))
        split = DatasetSplit.from_json((root / "split.json").read_text())
        return cls(root, [r["segment_id"] for r in rows], [parse_label(r["label"]) for r in rows], split)

    def subset(self, name):
        if name == "all":
            return [i for part in ("train", "validation", "test") for i in getattr(self.split, part)]
        return list(getattr(self.split, name))

    def segment(self, i):
        clip = read_wav((self.root / "wav" / f"{self.ids[i]}.wav").read_bytes(), self.ids[i])
        return Segment(clip.samples, self.labels[i], (self.ids[i], 0.0))


def make_split(labels, seed, include_n):
    """Split over the index; N segments stay out unless ``include_n``."""
    keep = [i for i, l in enumerate(labels) if include_n or not l.is_non_snore]
    if not keep:
        raise ValueError("no segments left to split")
    sub = split_dataset([labels[i] for i in keep], seed)
    remap = lambda idx: [keep[i] for i in idx]  # noqa: E731
    return DatasetSplit(remap(sub.train), remap(sub.validation), remap(sub.test), seed)


def format_counts(labels) -> str:
    counts = label_counts(labels)
    width = max(len("Total"), *(len(k) for k in counts))
    lines = [f"{'Label':<{width}}  Number"]
    lines += [f"{k:<{width}}  {v:,}" for k, v in counts.items()]
    lines.append(f"{'Total':<{width}}  {sum(counts.values()):,}")
    return "\n".join(lines) + "\n"


# --- feature store: <dir>/<kind>/<segment_id>.json -----------------------------

def extract_features(store: SegmentStore, kind, out_dir, cfg: DspConfig, workers=1):
    out = Path(out_dir) / kind
    out.mkdir(parents=True, exist_ok=True)

    def one(i):
        data = dsp.extract(store.segment(i), kind, cfg)
        (out / f"{store.ids[i]}.json").write_text(dsp.dump_features(store.ids[i], kind, data))
        return data.shape

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(one, range(len(store.ids))))


def load_feature_matrix(store: SegmentStore, feat_dir, indices, kind):
    out = []
    for i in indices:
        path = Path(feat_dir) / kind / f"{store.ids[i]}.json"
        if not path.exists():
            raise FileNotFoundError(f"missing feature file {path}")
        sid, k, data = dsp.load_features(path.read_text())
        if k != kind:
            raise ValueError(f"{path} holds {k!r} features, expected {kind!r}")
        out.append(data)
    return np.stack(out) if out else np.empty((0,))


def prepare_inputs(kind, feats):
    """Model-specific view of stored features."""
    if kind == "resnet":
        return np.stack([dsp.standardize(f) for f in feats])
    return feats


# --- models --------------------------------------------------------------------

def train_codebook(train_feats, cfg: BoawConfig) -> Codebook:
    return build_codebook(np.concatenate(list(train_feats), axis=0), cfg)


def train_model(kind, cfg: PipelineConfig, X, y, X_val=None, y_val=None, codebook=None, log=None):
    """Returns ``(model, classes, checkpoint_text)``; labels are VoteLabels."""
    classes = canonical_classes(y)
    if kind == "svm":
        if codebook is None:
            raise ValueError("the svm path needs a codebook")
        B = np.stack([encode_boaw(f, codebook, cfg.boaw) for f in X])
        model = svm_train(B, y, cfg.svm)
        if log is not None:
            for c, hist in model.objective_history.items():
                for epoch, value in enumerate(hist, 1):
                    log({"class": c, "epoch": epoch, "objective": value})
        return model, classes, model.to_json()
    index = {c: k for k, c in enumerate(classes)}
    yi = np.array([index[l] for l in y])
    yv = None if y_val is None else np.array([index.get(l, -1) for l in y_val])
    if kind == "bilstm":
        model = BiLSTMClassifier(X.shape[-1], cfg.bilstm_hidden, len(classes), seed=cfg.train.seed)
    elif kind == "resnet":
        rc = asdict(cfg.resnet) | {"n_classes": len(classes)}
        model = ResNet(ResNetConfig(**rc))
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    fit(model, prepare_inputs(kind, X), yi, None if X_val is None else prepare_inputs(kind, X_val),
        yv, cfg.train, log)
    return model, classes, save_checkpoint(model, kind, classes, cfg.train.seed, cfg.train)


def load_model(kind, text):
    """Returns ``(model, classes)`` from a checkpoint or SVM model file."""
    if kind == "svm":
        m = LinearSvmModel.from_json(text)
        return m, m.classes
    model, header = load_checkpoint(text)
    if header["model_kind"] != kind:
        raise ValueError(f"checkpoint holds a {header['model_kind']} model, not {kind}")
    model.astype(np.dtype((header.get("train_config") or {}).get("dtype", "float64")))
    return model, [parse_label(c) for c in header["classes"]]


def predict(kind, model, classes, X, cfg: PipelineConfig, codebook=None):
    if kind == "svm":
        if codebook is None:
            raise ValueError("the svm path needs a codebook")
        B = np.stack([encode_boaw(f, codebook, cfg.boaw) for f in X])
        scores = svm_decision(model, B)
    else:
        dtype = model.head.params["W"].dtype
        scores = predict_logits(model, prepare_inputs(kind, X).astype(dtype))
    return [classes[int(k)] for k in np.argmax(scores, axis=1)]
