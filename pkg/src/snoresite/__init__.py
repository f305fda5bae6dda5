"""Snore-site (VOTE) classification: WAV data layer, MFCC/Mel features, BoAW + linear SVM,
BiLSTM and bottleneck ResNet classifiers, metric reports, and a synthetic corpus generator."""

from .dataset import AudioClip, DatasetSplit, Segment, VoteLabel, parse_label, read_wav, write_wav

__version__ = "0.1.0"

__all__ = ["AudioClip", "DatasetSplit", "Segment", "VoteLabel", "parse_label", "read_wav",
           "write_wav", "__version__"]
