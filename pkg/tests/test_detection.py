from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from prego.aggregation import AggregationConfig, Strategy
from prego.anticipation import AllowedSet, Label, NoPrediction, fit_transition_matrix, TransitionAnticipator
from prego.dataset import build_occ_split
from prego.detection import (
    StepVerdict,
    build_anticipator,
    detect_procedure,
    evaluate_video,
    expand_verdicts_to_frames,
    run_pipeline,
    score_sequence_level,
)
from prego.domain import ActionSegment, ActionSequence, FrameStream, InvalidInputError, MistakeAnnotation
from prego.metrics import ConfusionCounts, balanced_accuracy, f1, precision, recall
from conftest import make_record

a, b, c = 0, 1, 2
W1 = AggregationConfig(Strategy.NON_OVERLAPPING, 1)


def seq_of(labels, span=1):
    return ActionSequence(tuple(ActionSegment(x, i * span, (i + 1) * span) for i, x in enumerate(labels)))


class Fixed:
    name = "fixed"

    def __init__(self, verdict):
        self.verdict = verdict

    def predict(self, history, ctx):
        return self.verdict

    def describe(self):
        return {"name": self.name}


class Echo(Fixed):
    def __init__(self):
        self.seen = []

    def predict(self, history, ctx):
        self.seen.append((tuple(history), ctx.step_index))
        return Label(ctx.observed)


def verdicts(flags, span=1):
    return [StepVerdict(i, 0, Label(0), f, i * span, (i + 1) * span) for i, f in enumerate(flags)]


def test_agreeing_anticipator_never_flags():
    out = detect_procedure(seq_of([a, b, c, a]), Echo())
    assert [v.flagged for v in out] == [False] * 4


def test_allowed_set_flag():
    out = detect_procedure(seq_of([a, c]), Fixed(AllowedSet(frozenset({b}))))
    assert out[1].flagged


def test_no_prediction_policy():
    assert detect_procedure(seq_of([a]), Fixed(NoPrediction()))[0].flagged
    assert not detect_procedure(seq_of([a]), Fixed(NoPrediction()), flag_no_prediction=False)[0].flagged


@given(st.lists(st.integers(0, 4), min_size=1, max_size=20))
def test_anticipator_sees_strict_prefix(labels):
    labels = [x for i, x in enumerate(labels) if i == 0 or x != labels[i - 1]]
    spy = Echo()
    detect_procedure(seq_of(labels), spy)
    assert spy.seen == [(tuple(labels[:t]), t) for t in range(len(labels))]


@pytest.mark.parametrize(
    "flags, annotation, expected",
    [
        ([False, False, False, True], MistakeAnnotation(3), ConfusionCounts(tp=1, tn=3)),
        ([False] * 4, MistakeAnnotation(3), ConfusionCounts(fn=1, tn=3)),
        ([False, True, False, False, False], MistakeAnnotation(), ConfusionCounts(fp=1, tn=4)),
    ],
)
def test_sequence_level_examples(flags, annotation, expected):
    assert score_sequence_level(verdicts(flags), annotation) == expected


def test_sequence_level_rejects_untrimmed_mistake():
    with pytest.raises(InvalidInputError):
        score_sequence_level(verdicts([False, False]), MistakeAnnotation(7))


def test_frame_expansion_window_one_equals_steps():
    vs = verdicts([False, False, True])
    ann = MistakeAnnotation(2)
    stream = FrameStream("v", 30.0, [0, 1, 2])
    assert expand_verdicts_to_frames(vs, stream, ann) == score_sequence_level(vs, ann)


def test_frame_expansion_conserves_frames():
    vs = verdicts([False, True], span=4)
    counts = expand_verdicts_to_frames(vs, FrameStream("v", 30.0, [0] * 8), MistakeAnnotation(6))
    assert counts.total == 8
    assert counts == ConfusionCounts(tp=2, fp=2, tn=4)
    with pytest.raises(InvalidInputError):
        expand_verdicts_to_frames(vs, FrameStream("v", 30.0, [0] * 9), MistakeAnnotation(6))


def test_expansion_pathology_fixture(toy_vocab):
    # GT [a a a | b b c], mistake starts at the lone c; with window 3 the second
    # window's mode is b, so the whole window inherits the mistake flag.
    rec = make_record("m", [a, a, a, b, b, c], first_mistake=5, category="order")
    best = build_anticipator("best", [], toy_vocab)
    res = evaluate_video(rec, AggregationConfig(Strategy.NON_OVERLAPPING, 3), best)
    assert f1(res.sequence_counts) == 1.0
    assert res.frame_counts == ConfusionCounts(tp=1, fp=2, tn=3)
    assert f1(res.frame_counts) == 0.5


def _toy_test(toy_dataset):
    return build_occ_split(toy_dataset.records)


def test_best_case_upper_bound(toy_dataset):
    train, test = _toy_test(toy_dataset)
    report = run_pipeline(test, W1, build_anticipator("best", train, toy_dataset.vocab))
    s = report.sequence_counts
    assert precision(s) == recall(s) == f1(s) == 1.0


def test_worst_case_lower_bound(toy_dataset):
    train, test = _toy_test(toy_dataset)
    report = run_pipeline(test, W1, build_anticipator("worst", train, toy_dataset.vocab))
    s = report.sequence_counts
    assert s.tp == s.tn == 0
    assert f1(s) == balanced_accuracy(s) == 0.0


def test_transition_detects_unseen_transition(toy_dataset):
    train, test = _toy_test(toy_dataset)
    report = run_pipeline(test, W1, build_anticipator("transition", train, toy_dataset.vocab))
    assert recall(report.sequence_counts) == 1.0
    # tp + fn equals the number of mistake procedures
    assert report.sequence_counts.tp + report.sequence_counts.fn == 1


def test_non_procedural_mistake_scored_as_correct(toy_vocab):
    rec = make_record("s", [a, b, c], first_mistake=1, category="slow", hint="test")
    res = evaluate_video(rec, W1, TransitionAnticipator(fit_transition_matrix([[a, b, c]], 6)))
    assert res.sequence_counts == ConfusionCounts(tn=3)
    assert res.frame_counts == ConfusionCounts(tn=3)


def test_report_json_and_parallel_runs_agree(toy_dataset):
    train, test = _toy_test(toy_dataset)
    ant = build_anticipator("ngram", train, toy_dataset.vocab)
    one = run_pipeline(test, W1, ant)
    four = run_pipeline(test, W1, ant, jobs=4)
    assert one.to_json() == four.to_json()
    body = json.loads(one.to_json())
    assert body["schema_version"] == 1
    assert body["sequence_level"]["tp"] == one.sequence_counts.tp
    assert "precision" in one.render_table()


def test_pipeline_rejects_unknown_source(toy_dataset):
    with pytest.raises(InvalidInputError):
        run_pipeline([], W1, Echo(), source="nope")


def test_llm_anticipator_needs_client(toy_dataset):
    with pytest.raises(InvalidInputError):
        build_anticipator("llm", toy_dataset.records, toy_dataset.vocab)
    with pytest.raises(InvalidInputError):
        build_anticipator("oracle", toy_dataset.records, toy_dataset.vocab)
