"""``snoresite`` command-line entry point.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import dsp, pipeline
from .boaw import Codebook
from .dataset import SAMPLE_RATE, canonical_classes, parse_label, read_wav
from .metrics import evaluate, render_report, report_from_rates
from .nn.train import DivergenceError
from .pipeline import FEATURE_KIND, MODEL_KINDS, PipelineConfig, SegmentStore
from .synth import BALANCED_LABELS, SynthPlan, write_synth_corpus


class UsageError(Exception):
    pass


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        cfg = PipelineConfig.from_dict(json.loads(Path(args.config).read_text()))
    if args.seed is not None:
        s = args.seed
        cfg = replace(cfg, seed=s, boaw=replace(cfg.boaw, seed=s), svm=replace(cfg.svm, seed=s),
                      resnet=replace(cfg.resnet, seed=s), train=replace(cfg.train, seed=s))
    if getattr(args, "include_n", False):
        cfg.include_n = True
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    return cfg


def _path(args, cfg, name, required=True):
    """Flag value, else ``paths[name]`` from the config."""
    value = getattr(args, name, None) or cfg.paths.get(name)
    if value is None and required:
        raise UsageError(f"missing --{name.replace('_', '-')} (or paths.{name} in the config)")
    return None if value is None else Path(value)


def _model(args, cfg):
    kind = args.model or cfg.paths.get("model")
    if kind not in MODEL_KINDS:
        raise UsageError(f"--model must be one of {', '.join(MODEL_KINDS)}")
    return kind


def _write(path: Path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    path.write_bytes(data)


# --- commands ------------------------------------------------------------------

def cmd_synth(args, cfg):
    out = _path(args, cfg, "out")
    if args.cohort_total is not None:
        plan = SynthPlan.cohort(args.cohort_total, cfg.seed, include_n=cfg.include_n)
    else:
        labels = args.labels.split(",") if args.labels else list(BALANCED_LABELS)
        plan = SynthPlan({str(parse_label(l)): args.per_class for l in labels}, cfg.seed)
    write_synth_corpus(plan, out)
    print(f"wrote {sum(plan.counts.values())} segments to {out}")


def cmd_segment(args, cfg):
    manifest = _path(args, cfg, "manifest")
    wav_dir = _path(args, cfg, "wav_dir", required=False) or manifest.parent
    out = _path(args, cfg, "segments")
    segments = pipeline.segment_manifest(manifest.read_text(), wav_dir)
    labels = [s.label for s in segments]
    split = pipeline.make_split(labels, cfg.seed, cfg.include_n)
    pipeline.write_segment_store(segments, out, split)
    sys.stdout.write(pipeline.format_counts(labels))


def cmd_features(args, cfg):
    store = SegmentStore.open(_path(args, cfg, "segments"))
    kind = args.kind
    out = _path(args, cfg, "features")
    shapes = pipeline.extract_features(store, kind, out, cfg.dsp, cfg.workers)
    print(f"wrote {len(shapes)} {kind} feature files, shape {shapes[0] if shapes else None}")


def cmd_codebook(args, cfg):
    store = SegmentStore.open(_path(args, cfg, "segments"))
    feats = pipeline.load_feature_matrix(store, _path(args, cfg, "features"),
                                         store.subset("train"), "mfcc")
    cb = pipeline.train_codebook(feats, cfg.boaw)
    _write(_path(args, cfg, "codebook"), cb.to_json())
    print(f"codebook: {cb.size} codewords, {cb.iterations} iterations, inertia {cb.inertia:.6g}")


def _load_codebook(args, cfg, kind):
    if kind != "svm":
        return None
    path = _path(args, cfg, "codebook")
    if not path.exists():
        raise FileNotFoundError(f"codebook {path} not found; run `snoresite codebook` first")
    return Codebook.from_json(path.read_text())


def cmd_train(args, cfg):
    kind = _model(args, cfg)
    store = SegmentStore.open(_path(args, cfg, "segments"))
    feat_dir = _path(args, cfg, "features")
    fk = FEATURE_KIND[kind]
    tr, va = store.subset("train"), store.subset("validation")
    X = pipeline.load_feature_matrix(store, feat_dir, tr, fk)
    Xv = pipeline.load_feature_matrix(store, feat_dir, va, fk) if va else None
    y = [store.labels[i] for i in tr]
    yv = [store.labels[i] for i in va] if va else None
    codebook = _load_codebook(args, cfg, kind)
    log_lines = []
    _, classes, text = pipeline.train_model(kind, cfg, X, y, Xv, yv, codebook,
                                            log=lambda e: log_lines.append(json.dumps(e, sort_keys=True)))
    ckpt = _path(args, cfg, "checkpoint")
    _write(ckpt, text)
    log_path = _path(args, cfg, "train_log", required=False) or ckpt.with_suffix(".log.jsonl")
    _write(log_path, "".join(line + "\n" for line in log_lines))
    print(f"trained {kind} on {len(tr)} segments, {len(classes)} classes -> {ckpt}")


def cmd_predict(args, cfg):
    kind = _model(args, cfg)
    store = SegmentStore.open(_path(args, cfg, "segments"))
    ckpt = _path(args, cfg, "checkpoint")
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint {ckpt} not found; run `snoresite train` first")
    model, classes = pipeline.load_model(kind, ckpt.read_text())
    idx = store.subset(args.subset)
    X = pipeline.load_feature_matrix(store, _path(args, cfg, "features"), idx, FEATURE_KIND[kind])
    pred = pipeline.predict(kind, model, classes, X, cfg, _load_codebook(args, cfg, kind))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("segment_id", "true", "pred"))
    for i, p in zip(idx, pred):
        w.writerow((store.ids[i], str(store.labels[i]), str(p)))
    _write(_path(args, cfg, "predictions"), buf.getvalue())
    print(f"predicted {len(idx)} {args.subset} segments")


def _report_from_fixture(path: Path):
    """Per-class P/R fixture: ``{"rows": {label: [P, R]}, "supports": {label: n}}``."""
    d = json.loads(path.read_text())
    order = canonical_classes([parse_label(c) for c in d["rows"]])
    rows = {str(c): tuple(d["rows"][str(c)]) for c in order}
    return report_from_rates(rows, {str(c): d["supports"][str(c)] for c in order})


def cmd_evaluate(args, cfg):
    if args.rates:
        report = _report_from_fixture(Path(args.rates))
    else:
        rows = list(csv.DictReader(io.StringIO(_path(args, cfg, "predictions").read_text())))
        if not rows:
            raise ValueError("predictions file is empty")
        y_true = [parse_label(r["true"]) for r in rows]
        y_pred = [parse_label(r["pred"]) for r in rows]
        report = evaluate(y_true, y_pred, canonical_classes(y_true + y_pred))
    out = _path(args, cfg, "reports")
    text = render_report(report, "text")
    _write(out / "report.txt", text)
    _write(out / "report.json", render_report(report, "json"))
    sys.stdout.write(text.decode())


def cmd_spectrogram(args, cfg):
    clip = read_wav(Path(args.wav).read_bytes(), str(args.wav))
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio")
    spec = dsp.label_spectrogram(clip, cfg.dsp)
    _write(Path(args.out), dsp.to_pgm(spec.data))


# --- parser --------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--seed", type=int, help="overrides every seed in the config")
    common.add_argument("--model", choices=MODEL_KINDS)
    common.add_argument("--workers", type=int, help="feature-extraction threads")

    p = argparse.ArgumentParser(prog="snoresite", description="VOTE snore-site classification pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic corpus and manifest")
    s.add_argument("--out")
    s.add_argument("--per-class", type=int, default=200)
    s.add_argument("--labels", help="comma-separated labels (default: the nine snore classes)")
    s.add_argument("--cohort-total", type=int, help="use cohort class proportions scaled to this total")
    s.add_argument("--include-n", action="store_true")

    s = sub.add_parser("segment", parents=[common], help="cut labeled periods into 1-s segments")
    s.add_argument("--manifest")
    s.add_argument("--wav-dir")
    s.add_argument("--segments", "--out", dest="segments")
    s.add_argument("--include-n", action="store_true", help="keep N segments in the split")

    s = sub.add_parser("features", parents=[common], help="extract MFCC or Mel-spectrogram features")
    s.add_argument("--segments")
    s.add_argument("--kind", choices=("mfcc", "melspec"), required=True)
    s.add_argument("--features", "--out", dest="features")

    s = sub.add_parser("codebook", parents=[common], help="learn the BoAW codebook on training frames")
    s.add_argument("--segments")
    s.add_argument("--features")
    s.add_argument("--codebook", "--out", dest="codebook")

    s = sub.add_parser("train", parents=[common], help="train a classifier")
    s.add_argument("--segments")
    s.add_argument("--features")
    s.add_argument("--codebook")
    s.add_argument("--checkpoint", "--out", dest="checkpoint")
    s.add_argument("--train-log")

    s = sub.add_parser("predict", parents=[common], help="label a split with a trained model")
    s.add_argument("--segments")
    s.add_argument("--features")
    s.add_argument("--codebook")
    s.add_argument("--checkpoint")
    s.add_argument("--subset", choices=("train", "validation", "test", "all"), default="test")
    s.add_argument("--predictions", "--out", dest="predictions")

    s = sub.add_parser("evaluate", parents=[common], help="write text and JSON metric reports")
    s.add_argument("--predictions")
    s.add_argument("--rates", help="per-class precision/recall fixture JSON instead of predictions")
    s.add_argument("--reports", "--out", dest="reports")

    s = sub.add_parser("spectrogram", parents=[common], help="render a labeling spectrogram as PGM")
    s.add_argument("wav")
    s.add_argument("out")
    return p


COMMANDS = {"synth": cmd_synth, "segment": cmd_segment, "features": cmd_features,
            "codebook": cmd_codebook, "train": cmd_train, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "spectrogram": cmd_spectrogram}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](args, cfg)
    except DivergenceError as e:
        print(f"snoresite {args.command}: training diverged: {e}", file=sys.stderr)
        return 3
    except (UsageError, OSError, ValueError, KeyError, TypeError) as e:
        print(f"snoresite {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
