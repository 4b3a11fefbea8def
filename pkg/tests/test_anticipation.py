from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prego.anticipation import (
    AllowedSet,
    CornerCase,
    CornerCaseAnticipator,
    Label,
    Modality,
    NgramModel,
    NoPrediction,
    PromptContext,
    Scheme,
    StepContext,
    Transcript,
    build_prompt,
    corner_case_verdict,
    fit_transition_matrix,
    is_flagged,
    ngram_verdict,
    one_step_memory_verdict,
    select_context,
    verdict_from_dict,
    verdict_to_dict,
)
from prego.domain import InvalidInputError, InvariantViolation

GOLDEN = Path(__file__).parent / "golden"
BULLDOZER = Transcript("bulldozer", (0, 1, 2, 3, 4))
a, b, c, d = 0, 1, 2, 3


def golden(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8")


def ctx(history=(0, 1), transcripts=(BULLDOZER,), modality=Modality.TEXTUAL):
    return PromptContext("bulldozer", tuple(history), tuple(transcripts), modality)


# ------------------------------------------------------------ transition matrix


def test_fit_counts_example():
    m = fit_transition_matrix([[a, b, c], [a, c]], 4)
    assert m.counts[a, b] == 1 and m.counts[b, c] == 1 and m.counts[a, c] == 1
    assert m.counts.sum() == 3
    assert m.initial.tolist() == [2, 0, 0, 0]


@given(st.lists(st.lists(st.integers(0, 5), max_size=12), min_size=1, max_size=10))
def test_count_total_is_number_of_adjacent_pairs(seqs):
    m = fit_transition_matrix(seqs, 6)
    assert m.counts.sum() == sum(max(len(s) - 1, 0) for s in seqs)


@given(st.lists(st.lists(st.integers(0, 5), min_size=1, max_size=12), min_size=1, max_size=10))
def test_one_step_memory_never_flags_training_pairs(seqs):
    m = fit_transition_matrix(seqs, 6)
    for s in seqs:
        assert not is_flagged(one_step_memory_verdict(m, None), s[0])
        for prev, cur in zip(s, s[1:]):
            assert not is_flagged(one_step_memory_verdict(m, prev), cur)


def test_one_step_memory_verdicts():
    m = fit_transition_matrix([[a, b, c], [a, c]], 4)
    assert one_step_memory_verdict(m, a) == AllowedSet(frozenset({b, c}))
    assert isinstance(one_step_memory_verdict(m, d), NoPrediction)
    assert is_flagged(one_step_memory_verdict(m, b), a)


def test_fit_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        fit_transition_matrix([], 3)
    with pytest.raises(InvalidInputError):
        fit_transition_matrix([[0, 7]], 3)


# ---------------------------------------------------------------------- n-gram


def test_ngram_example():
    model = NgramModel(2).fit([[a, b, c], [a, b, d], [a, b, c]])
    assert ngram_verdict([a, b], 2, model) == Label(c)
    assert model.predict([]) == Label(a)


def test_ngram_backs_off_to_shorter_context():
    model = NgramModel(3).fit([[a, b, c], [d, b, a]])
    # (c, b) unseen as a bigram context; unigram context b splits a/c -> smallest
    assert model.predict([c, b]) == Label(a)
    assert isinstance(NgramModel(1).fit([[a]]).predict([b]), NoPrediction)


@given(
    st.lists(st.lists(st.integers(0, 4), min_size=1, max_size=10), min_size=1, max_size=8),
    st.lists(st.integers(0, 4), max_size=6),
)
def test_unigram_context_agrees_with_transition_argmax(seqs, history):
    m = fit_transition_matrix(seqs, 5)
    row = m.initial if not history else m.counts[history[-1]]
    verdict = ngram_verdict(history, 1, NgramModel(3).fit(seqs))
    if row.sum() == 0:
        assert isinstance(verdict, NoPrediction)
    else:
        assert verdict == Label(int(np.argmax(row)))


def test_ngram_order_checks():
    with pytest.raises(InvalidInputError):
        NgramModel(0)
    with pytest.raises(InvalidInputError):
        ngram_verdict([a], 3, NgramModel(2).fit([[a, b]]))


# ---------------------------------------------------------------- corner cases


@pytest.mark.parametrize("observed", [0, 3, 5])
@pytest.mark.parametrize("is_mistake", [False, True])
def test_best_and_worst(observed, is_mistake):
    best = corner_case_verdict(CornerCase.BEST, observed, is_mistake, 6)
    worst = corner_case_verdict(CornerCase.WORST, observed, is_mistake, 6)
    assert is_flagged(best, observed) == is_mistake
    assert is_flagged(worst, observed) != is_mistake


def test_random_is_keyed_by_video_and_step():
    ant = CornerCaseAnticipator(CornerCase.RANDOM, 6, seed=7)
    steps = [StepContext("v1", "t", i, 0, False) for i in range(20)]
    first = [ant.predict((), s) for s in steps]
    # call order does not matter
    again = [ant.predict((), s) for s in reversed(steps)][::-1]
    assert first == again
    other = CornerCaseAnticipator(CornerCase.RANDOM, 6, seed=8)
    assert [other.predict((), s) for s in steps] != first
    assert all(0 <= v.label < 6 for v in first)


def test_verdict_serialisation_round_trip():
    for v in (Label(2), AllowedSet(frozenset({1, 3})), NoPrediction("x")):
        assert verdict_from_dict(verdict_to_dict(v)) == v
    with pytest.raises(InvariantViolation):
        AllowedSet(frozenset())


def test_no_prediction_flag_policy():
    assert is_flagged(NoPrediction(), 1)
    assert not is_flagged(NoPrediction(), 1, flag_no_prediction=False)


# --------------------------------------------------------------------- prompts


def test_system_prompt_golden(toy_vocab):
    assert build_prompt(ctx(), Scheme.FEW_SHOT, toy_vocab).system == golden("system.txt")
    assert build_prompt(ctx(), Scheme.ACOT, toy_vocab).system == golden("system.txt")


def test_zero_shot_golden(toy_vocab):
    bundle = build_prompt(ctx(transcripts=()), Scheme.ZERO_SHOT, toy_vocab)
    assert bundle.stage_one_user is None
    assert bundle.system == golden("zs_system.txt")
    assert bundle.system.startswith("Below is an instruction that describes the task")
    assert bundle.final_user() == golden("zs_user.txt")


def test_few_shot_golden(toy_vocab):
    bundle = build_prompt(ctx(), Scheme.FEW_SHOT, toy_vocab)
    assert bundle.final_user() == golden("fs_user.txt")
    assert bundle.final_user().startswith(golden("fs_example.txt"))


def test_few_shot_numeric_golden(toy_vocab):
    bundle = build_prompt(ctx(modality=Modality.NUMERICAL), Scheme.FEW_SHOT, toy_vocab)
    assert bundle.final_user() == golden("fs_user_num.txt")


def test_acot_golden(toy_vocab):
    bundle = build_prompt(ctx(), Scheme.ACOT, toy_vocab)
    assert bundle.stage_one_user == golden("acot_stage_one.txt")
    assert bundle.stage_one_user.endswith("Now, let's proceed with the analysis step-by-step:")
    assert bundle.final_user("STUB REASONING") == golden("acot_stage_two.txt")
    with pytest.raises(InvalidInputError):
        bundle.final_user()


def test_one_block_per_transcript(toy_vocab):
    other = Transcript("bulldozer", (0, 2, 1, 5))
    user = build_prompt(ctx(transcripts=(BULLDOZER, other)), Scheme.FEW_SHOT, toy_vocab).final_user()
    assert user.count("Next Symbol:") == 3


def test_few_shot_needs_transcripts(toy_vocab):
    for scheme in (Scheme.FEW_SHOT, Scheme.ACOT):
        with pytest.raises(InvalidInputError):
            build_prompt(ctx(transcripts=()), scheme, toy_vocab)


@given(st.lists(st.integers(0, 5), max_size=8), st.sampled_from(list(Scheme)), st.sampled_from(list(Modality)))
def test_prompts_are_deterministic(toy_vocab_h, history, scheme, modality):
    one = build_prompt(ctx(history, modality=modality), scheme, toy_vocab_h)
    two = build_prompt(ctx(list(history), modality=modality), scheme, toy_vocab_h)
    assert one == two


@pytest.fixture(scope="module")
def toy_vocab_h():
    from conftest import TOY_NAMES

    from prego.domain import ActionVocabulary

    return ActionVocabulary.from_names(TOY_NAMES)


def test_select_context_prefers_same_task_and_dedupes():
    t1, t2 = Transcript("x", (0, 1)), Transcript("y", (1, 2))
    assert select_context([t1, t2, t1], "y") == (t2,)
    assert select_context([t1, t1, t2], "z", cap=5) == (t1, t2)
    assert select_context([Transcript("y", (i, i + 1)) for i in range(9)], "y", cap=3) == tuple(
        Transcript("y", (i, i + 1)) for i in range(3)
    )
