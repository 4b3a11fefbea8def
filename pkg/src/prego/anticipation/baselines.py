"""Non-LLM anticipators: one-step memory, n-gram, and the corner cases."""

from __future__ import annotations

import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from ..domain import ActionSequence, InvalidInputError
from .base import AllowedSet, Label, NoPrediction, StepContext, Verdict

BOS = -1


def _label_lists(training: Iterable[ActionSequence | Sequence[int]]) -> list[list[int]]:
    out = []
    for seq in training:
        out.append(seq.labels if isinstance(seq, ActionSequence) else [int(x) for x in seq])
    return out


@dataclass(frozen=True)
class TransitionMatrix:
    """``counts[l, m]`` is how often action m directly follows action l.

    ``initial`` counts the first action of each training sequence, so the
    opening step of a procedure can be judged too.
    """

    counts: np.ndarray
    initial: np.ndarray

    @property
    def size(self) -> int:
        return self.counts.shape[0]

    def allowed_after(self, prev: int | None) -> np.ndarray:
        row = self.initial if prev is None else self.counts[prev]
        return np.flatnonzero(row > 0)


def fit_transition_matrix(training: Iterable[ActionSequence | Sequence[int]], vocab_size: int) -> TransitionMatrix:
    sequences = _label_lists(training)
    if not sequences:
        raise InvalidInputError("cannot fit a transition matrix without training sequences")
    counts = np.zeros((vocab_size, vocab_size), dtype=np.int64)
    initial = np.zeros(vocab_size, dtype=np.int64)
    for labels in sequences:
        for x in labels:
            if not 0 <= x < vocab_size:
                raise InvalidInputError(f"label {x} outside vocabulary of size {vocab_size}")
        if labels:
            initial[labels[0]] += 1
        for a, b in zip(labels, labels[1:]):
            counts[a, b] += 1
    return TransitionMatrix(counts, initial)


def one_step_memory_verdict(m: TransitionMatrix, prev: int | None) -> Verdict:
    allowed = m.allowed_after(prev)
    if len(allowed) == 0:
        return NoPrediction("no recorded transition")
    return AllowedSet(frozenset(allowed.tolist()))


class TransitionAnticipator:
    name = "transition"

    def __init__(self, matrix: TransitionMatrix):
        self.matrix = matrix

    def predict(self, history: Sequence[int], ctx: StepContext) -> Verdict:
        return one_step_memory_verdict(self.matrix, history[-1] if history else None)

    def describe(self) -> dict:
        return {"name": self.name, "vocab_size": self.matrix.size}


class NgramModel:
    """Most-frequent-successor model with back-off from order k down to 1.

    Histories are left-padded with a start marker, so the first step is
    predicted from the distribution of opening actions.
    """

    def __init__(self, order: int = 2):
        if order < 1:
            raise InvalidInputError(f"n-gram order must be >= 1, got {order}")
        self.order = order
        self.successors: dict[tuple[int, ...], Counter] = defaultdict(Counter)

    def fit(self, training: Iterable[ActionSequence | Sequence[int]]) -> NgramModel:
        sequences = _label_lists(training)
        if not sequences:
            raise InvalidInputError("cannot fit an n-gram model without training sequences")
        k = self.order
        for labels in sequences:
            padded = [BOS] * k + labels
            for i in range(k, len(padded)):
                for n in range(1, k + 1):
                    self.successors[tuple(padded[i - n:i])][padded[i]] += 1
        return self

    def predict(self, history: Sequence[int]) -> Verdict:
        k = self.order
        padded = [BOS] * k + [int(x) for x in history]
        for n in range(k, 0, -1):
            counter = self.successors.get(tuple(padded[len(padded) - n:]))
            if counter:
                best = max(counter.values())
                return Label(min(lab for lab, c in counter.items() if c == best))
        return NoPrediction("history unseen at every order")


def ngram_verdict(history: Sequence[int], order: int, model: NgramModel) -> Verdict:
    if model.order < order:
        raise InvalidInputError(f"model was fitted with order {model.order} < {order}")
    if model.order == order:
        return model.predict(history)
    # A higher-order model contains every lower-order context.
    sub = NgramModel(order)
    sub.successors = model.successors
    return sub.predict(history)


class NgramAnticipator:
    name = "ngram"

    def __init__(self, model: NgramModel):
        self.model = model

    def predict(self, history: Sequence[int], ctx: StepContext) -> Verdict:
        return self.model.predict(history)

    def describe(self) -> dict:
        return {"name": self.name, "order": self.model.order}


class CornerCase(str, Enum):
    BEST = "best"
    WORST = "worst"
    RANDOM = "random"


def _other_label(observed: int, vocab_size: int) -> Verdict:
    if vocab_size < 2:
        return NoPrediction("vocabulary has a single action")
    return Label((observed + 1) % vocab_size)


def corner_case_verdict(
    kind: CornerCase,
    observed: int,
    is_mistake: bool,
    vocab_size: int,
    rng: np.random.Generator | None = None,
) -> Verdict:
    """Oracle-driven bounds.

    BEST agrees with the recognized step exactly when it is correct, WORST
    exactly when it is a mistake; RANDOM draws a uniform label from ``rng``.
    """
    kind = CornerCase(kind)
    if kind is CornerCase.RANDOM:
        if rng is None:
            raise InvalidInputError("random corner case needs a generator")
        return Label(int(rng.integers(vocab_size)))
    agree = (not is_mistake) if kind is CornerCase.BEST else is_mistake
    return Label(observed) if agree else _other_label(observed, vocab_size)


class CornerCaseAnticipator:
    def __init__(self, kind: CornerCase, vocab_size: int, seed: int = 0):
        self.kind = CornerCase(kind)
        self.vocab_size = vocab_size
        self.seed = seed
        self.name = self.kind.value

    def _rng(self, ctx: StepContext) -> np.random.Generator:
        # Keyed by (seed, video, step) so results do not depend on call order.
        return np.random.default_rng([self.seed, zlib.crc32(ctx.video_id.encode()), ctx.step_index])

    def predict(self, history: Sequence[int], ctx: StepContext) -> Verdict:
        rng = self._rng(ctx) if self.kind is CornerCase.RANDOM else None
        return corner_case_verdict(self.kind, ctx.observed, ctx.is_mistake, self.vocab_size, rng)

    def describe(self) -> dict:
        out = {"name": self.name, "vocab_size": self.vocab_size}
        if self.kind is CornerCase.RANDOM:
            out["seed"] = self.seed
        return out
