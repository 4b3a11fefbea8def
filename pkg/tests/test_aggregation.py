from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prego.aggregation import (
    AggregationConfig,
    Strategy,
    TieBreak,
    aggregate_centered,
    aggregate_nonoverlapping,
    aggregate_trailing,
    smooth_and_collapse,
    window_mode,
)
from prego.domain import FrameStream, InvalidInputError, flatten_to_frames
from prego.metrics import levenshtein_similarity
from oracles import (
    centered_modes,
    chunk_mode_dedupe,
    mode_earliest,
    mode_smallest,
    run_length,
    trailing_modes,
)

A, B = 0, 1
streams = st.lists(st.integers(0, 4), min_size=1, max_size=80)
windows = st.integers(1, 12)
ties = st.sampled_from(list(TieBreak))


def stream(labels):
    return FrameStream("v", 30.0, labels)


def cfg(strategy, w, tie=TieBreak.SMALLEST_LABEL):
    return AggregationConfig(strategy, w, tie)


@pytest.mark.parametrize("window, expected", [([3, 3, 1], 3), ([1, 2], 1), ([2, 1, 2, 1, 1], 1)])
def test_window_mode_examples(window, expected):
    assert window_mode(window) == expected


def test_window_mode_earliest_tie_break():
    assert window_mode([2, 1], TieBreak.EARLIEST_FIRST) == 2
    with pytest.raises(InvalidInputError):
        window_mode([])


def test_nonoverlapping_example():
    seq = aggregate_nonoverlapping(stream([A, A, B, B, B, A]), cfg(Strategy.NON_OVERLAPPING, 3))
    assert seq.labels == [A, B]
    assert [(s.start, s.end) for s in seq] == [(0, 3), (3, 6)]


def test_trailing_example():
    out = aggregate_trailing(stream([A, A, B, A, A]), cfg(Strategy.TRAILING, 3))
    assert list(out.labels) == [A] * 5


def test_centered_example():
    # Both end windows are two-frame ties; b keeps the ends only as the smaller id.
    a, b = 1, 0
    out = aggregate_centered(stream([b, a, a, a, b]), cfg(Strategy.CENTERED, 3))
    assert list(out.labels) == [b, a, a, a, b]
    out = aggregate_centered(stream([B, A, A, A, B]), cfg(Strategy.CENTERED, 3))
    assert list(out.labels) == [A] * 5


def test_short_final_chunk_is_kept():
    seq = aggregate_nonoverlapping(stream([A, A, B]), cfg(Strategy.NON_OVERLAPPING, 2))
    assert [(s.label, s.start, s.end) for s in seq] == [(A, 0, 2), (B, 2, 3)]


def test_empty_stream_and_bad_window():
    with pytest.raises(InvalidInputError):
        smooth_and_collapse(stream([]), cfg(Strategy.CENTERED, 3))
    with pytest.raises(InvalidInputError):
        AggregationConfig(Strategy.TRAILING, 0)


@given(streams, windows, ties)
def test_nonoverlapping_matches_oracle(labels, w, tie):
    mode = mode_smallest if tie is TieBreak.SMALLEST_LABEL else mode_earliest
    seq = aggregate_nonoverlapping(stream(labels), cfg(Strategy.NON_OVERLAPPING, w, tie))
    assert [(s.label, s.start, s.end) for s in seq] == chunk_mode_dedupe(labels, w, mode)


@given(streams, windows, ties)
def test_sliding_strategies_match_oracles(labels, w, tie):
    mode = mode_smallest if tie is TieBreak.SMALLEST_LABEL else mode_earliest
    assert list(aggregate_trailing(stream(labels), cfg(Strategy.TRAILING, w, tie)).labels) == trailing_modes(
        labels, w, mode
    )
    assert list(aggregate_centered(stream(labels), cfg(Strategy.CENTERED, w, tie)).labels) == centered_modes(
        labels, w, mode
    )


@given(streams, windows, st.sampled_from(list(Strategy)))
def test_output_is_collapsed_and_covers_stream(labels, w, strategy):
    seq = smooth_and_collapse(stream(labels), cfg(strategy, w))
    assert seq.segments[0].start == 0 and seq.segments[-1].end == len(labels)
    assert all(a != b for a, b in zip(seq.labels, seq.labels[1:]))
    assert set(seq.labels) <= set(labels)


@given(streams, st.sampled_from(list(Strategy)))
def test_window_one_is_identity(labels, strategy):
    seq = smooth_and_collapse(stream(labels), cfg(strategy, 1))
    assert [(s.label, s.start, s.end) for s in seq] == run_length(labels)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=8), st.integers(5, 30), windows)
def test_clean_long_segments_survive(steps, seg_len, w):
    # A noise-free stream whose segments are at least as long as the window
    # keeps its step order under the chunked strategy.
    steps = [x for i, x in enumerate(steps) if i == 0 or x != steps[i - 1]]
    labels = [x for x in steps for _ in range(max(seg_len, 2 * w))]
    seq = aggregate_nonoverlapping(stream(labels), cfg(Strategy.NON_OVERLAPPING, w))
    assert seq.labels == steps


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_large_window_denoises(seed):
    rng = np.random.default_rng(seed)
    steps = [0, 1, 2, 3, 4, 5]
    gt = np.repeat(steps, 300)
    noisy = gt.copy()
    flip = rng.random(len(gt)) < 0.2
    noisy[flip] = rng.integers(6, 10, flip.sum())
    raw = smooth_and_collapse(stream(noisy.tolist()), cfg(Strategy.NON_OVERLAPPING, 1)).labels
    smooth = smooth_and_collapse(stream(noisy.tolist()), cfg(Strategy.NON_OVERLAPPING, 100)).labels
    assert levenshtein_similarity(smooth, steps) > levenshtein_similarity(raw, steps)
    assert smooth == steps


def test_flatten_of_aggregate_has_same_length():
    labels = [0, 0, 1, 2, 2, 2, 1, 0]
    seq = smooth_and_collapse(stream(labels), cfg(Strategy.CENTERED, 3))
    assert len(flatten_to_frames(seq)) == len(labels)
