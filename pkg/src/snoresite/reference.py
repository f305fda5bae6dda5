"""Published cohort figures used as arithmetic fixtures.

Segment counts per label, the held-out test supports, and the per-class
precision/recall/F1 reported for the three classifiers.  None of this can be
re-derived without the private recordings; it is here so the metric code and
the segmentation bookkeeping can be checked against real numbers.
"""

from __future__ import annotations

from .dataset import LabeledPeriod, parse_label

# 1-second segments per label after truncation.
SEGMENT_COUNTS = {
    "N": 3150, "V": 259, "O": 403, "T": 77, "E": 13,
    "VO": 1016, "VT": 46, "OT": 140, "OE": 39, "VOT": 30,
}
SEGMENT_TOTAL = 5173

CLASSES = ("V", "O", "T", "E", "VO", "VT", "OT", "OE", "VOT")

TRAIN_COUNTS = dict(zip(CLASSES, (902, 714, 205, 54, 2050, 210, 349, 66, 99)))
TRAIN_TOTAL_STATED = 4696  # the column itself sums to 4649
TEST_SUPPORT = dict(zip(CLASSES, (100, 79, 23, 6, 227, 23, 38, 7, 11)))
TEST_TOTAL = 514

# model -> (per-class {label: (precision, recall, f1)}, accuracy,
#           macro (P, R, F1), weighted (P, R, F1)), values as printed.
RESULTS = {
    "svm": (
        dict(zip(CLASSES, [
            (0.94, 0.73, 0.82), (0.80, 0.54, 0.65), (0.95, 0.83, 0.88),
            (1.00, 0.17, 0.29), (0.75, 0.98, 0.85), (0.95, 0.87, 0.91),
            (0.70, 0.68, 0.69), (1.00, 0.43, 0.60), (0.67, 0.18, 0.29)])),
        0.80, (0.86, 0.60, 0.66), (0.81, 0.80, 0.78)),
    "bilstm": (
        dict(zip(CLASSES, [
            (0.86, 0.76, 0.81), (0.63, 0.68, 0.65), (0.85, 1.00, 0.92),
            (0.33, 0.17, 0.22), (0.80, 0.83, 0.82), (0.78, 0.78, 0.78),
            (0.72, 0.68, 0.70), (0.75, 0.43, 0.55), (0.73, 0.73, 0.73)])),
        0.77, (0.72, 0.67, 0.69), (0.77, 0.77, 0.77)),
    "resnet": (
        dict(zip(CLASSES, [
            (0.90, 0.82, 0.86), (0.77, 0.52, 0.62), (0.72, 0.91, 0.81),
            (0.80, 0.67, 0.73), (0.77, 0.89, 0.83), (0.88, 0.65, 0.75),
            (0.57, 0.66, 0.61), (1.00, 0.86, 0.92), (0.83, 0.45, 0.59)])),
        0.78, (0.81, 0.71, 0.75), (0.79, 0.78, 0.78)),
}

# Period lengths cycled when laying out the fixture manifest.  The fractional
# tails and the sub-second entry exercise the drop-remainder rule.
_PERIOD_PATTERN = (3.5, 1.25, 0.8, 6.1, 2.0, 4.75, 1.0, 9.3)
_CLIP_MAX_S = 60.0
_GAP_S = 0.5


def fixture_manifest(counts=None):
    """Lay out labeled periods whose 1-s truncation yields exactly ``counts``.

    Returns ``(periods, clip_durations)``; clips are named ``fixture_NNN.wav``
    and each holds at most about a minute of audio.
    """
    counts = SEGMENT_COUNTS if counts is None else counts
    periods = []
    durations = {}
    clip_idx, cursor = 0, 0.0

    def place(length, label):
        nonlocal clip_idx, cursor
        if cursor + length > _CLIP_MAX_S and cursor > 0:
            durations[f"fixture_{clip_idx:03d}.wav"] = cursor
            clip_idx, cursor = clip_idx + 1, 0.0
        name = f"fixture_{clip_idx:03d}.wav"
        periods.append(LabeledPeriod(name, cursor, cursor + length, label))
        cursor += length + _GAP_S

    for text, target in counts.items():
        label = parse_label(text)
        remaining = target
        k = 0
        while remaining > 0:
            length = _PERIOD_PATTERN[k % len(_PERIOD_PATTERN)]
            k += 1
            whole = int(length)
            if whole > remaining:
                length = remaining + 0.6
                whole = remaining
            place(length, label)
            remaining -= whole
    if cursor > 0:
        durations[f"fixture_{clip_idx:03d}.wav"] = cursor
    return periods, durations
