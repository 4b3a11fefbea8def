"""Frame aggregation: turn noisy per-frame predictions into action sequences.

Three strategies are provided:

* ``NON_OVERLAPPING`` replaces each consecutive chunk of ``window_len`` frames
  by its mode, then merges equal neighbours.
* ``TRAILING`` replaces every frame by the mode of itself and the previous
  ``window_len - 1`` raw frames (stride 1).
* ``CENTERED`` replaces every frame by the mode of a window centred on it,
  truncated at the stream boundaries.

Modes are always taken over the raw input labels, never over already
smoothed output.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .domain import ActionSegment, ActionSequence, FrameStream, InvalidInputError, segment_from_frames

DEFAULT_WINDOW = 500


class Strategy(str, Enum):
    NON_OVERLAPPING = "nonoverlap"
    TRAILING = "trailing"
    CENTERED = "centered"


class TieBreak(str, Enum):
    SMALLEST_LABEL = "smallest"
    EARLIEST_FIRST = "earliest"


@dataclass(frozen=True)
class AggregationConfig:
    strategy: Strategy = Strategy.NON_OVERLAPPING
    window_len: int = DEFAULT_WINDOW
    tie_break: TieBreak = TieBreak.SMALLEST_LABEL

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        if int(self.window_len) != self.window_len or self.window_len < 1:
            raise InvalidInputError(f"window_len must be a positive integer, got {self.window_len}")

    def to_dict(self) -> dict:
        return {"strategy": self.strategy.value, "window_len": self.window_len, "tie_break": self.tie_break.value}


def window_mode(labels: Sequence[int], tie_break: TieBreak = TieBreak.SMALLEST_LABEL) -> int:
    """Most frequent label of a non-empty slice, ties resolved by ``tie_break``."""
    if len(labels) == 0:
        raise InvalidInputError("mode of an empty window is undefined")
    counts = Counter(int(x) for x in labels)
    best = max(counts.values())
    tied = [lab for lab, c in counts.items() if c == best]
    if len(tied) == 1:
        return tied[0]
    if TieBreak(tie_break) is TieBreak.SMALLEST_LABEL:
        return min(tied)
    # Counter preserves insertion order, i.e. order of first occurrence.
    return tied[0]


def _windowed_modes(labels: np.ndarray, starts: np.ndarray, ends: np.ndarray, tie_break: TieBreak) -> np.ndarray:
    """Mode of ``labels[starts[i]:ends[i]]`` for every i, vectorised over windows.

    Uses per-label prefix counts, so the cost is O(len(labels) * n_labels)
    regardless of the window length.
    """
    n = len(labels)
    present = np.unique(labels)
    onehot = labels[:, None] == present[None, :]
    prefix = np.zeros((n + 1, len(present)), dtype=np.int64)
    np.cumsum(onehot, axis=0, out=prefix[1:])
    counts = prefix[ends] - prefix[starts]
    if TieBreak(tie_break) is TieBreak.SMALLEST_LABEL:
        # argmax returns the first maximum; ``present`` is sorted ascending.
        return present[np.argmax(counts, axis=1)]
    # next_occ[j, c] = smallest index >= j holding present[c] (n if none)
    next_occ = np.full((n + 1, len(present)), n, dtype=np.int64)
    for j in range(n - 1, -1, -1):
        next_occ[j] = next_occ[j + 1]
        next_occ[j, np.searchsorted(present, labels[j])] = j
    first_seen = next_occ[starts]
    is_max = counts == counts.max(axis=1, keepdims=True)
    first_seen = np.where(is_max, first_seen, n + 1)
    return present[np.argmin(first_seen, axis=1)]


def _as_array(stream: FrameStream) -> np.ndarray:
    if len(stream) == 0:
        raise InvalidInputError(f"cannot aggregate empty stream {stream.video_id!r}")
    return np.asarray(stream.labels, dtype=np.int64)


def aggregate_nonoverlapping(stream: FrameStream, cfg: AggregationConfig) -> ActionSequence:
    """Chunk-mode aggregation followed by elimination of successive duplicates.

    The last chunk may be shorter than ``window_len``; it is aggregated on its
    own so that the returned spans cover every frame.
    """
    labels = _as_array(stream)
    n, w = len(labels), cfg.window_len
    starts = np.arange(0, n, w)
    ends = np.minimum(starts + w, n)
    modes = _windowed_modes(labels, starts, ends, cfg.tie_break)
    segments: list[ActionSegment] = []
    seg_label, seg_start = int(modes[0]), 0
    for mode, start in zip(modes[1:].tolist(), starts[1:].tolist()):
        if mode != seg_label:
            segments.append(ActionSegment(seg_label, seg_start, start))
            seg_label, seg_start = mode, start
    segments.append(ActionSegment(seg_label, seg_start, n))
    return ActionSequence(tuple(segments), collapsed=True)


def aggregate_trailing(stream: FrameStream, cfg: AggregationConfig) -> FrameStream:
    labels = _as_array(stream)
    idx = np.arange(len(labels))
    starts = np.maximum(0, idx - cfg.window_len + 1)
    smoothed = _windowed_modes(labels, starts, idx + 1, cfg.tie_break)
    return stream.with_labels(smoothed.tolist())


def aggregate_centered(stream: FrameStream, cfg: AggregationConfig) -> FrameStream:
    labels = _as_array(stream)
    n = len(labels)
    half = cfg.window_len // 2
    idx = np.arange(n)
    starts = np.maximum(0, idx - half)
    ends = np.minimum(n, idx + half + 1)
    smoothed = _windowed_modes(labels, starts, ends, cfg.tie_break)
    return stream.with_labels(smoothed.tolist())


def smooth_and_collapse(stream: FrameStream, cfg: AggregationConfig) -> ActionSequence:
    if cfg.strategy is Strategy.NON_OVERLAPPING:
        return aggregate_nonoverlapping(stream, cfg)
    if cfg.strategy is Strategy.TRAILING:
        return segment_from_frames(aggregate_trailing(stream, cfg))
    return segment_from_frames(aggregate_centered(stream, cfg))
