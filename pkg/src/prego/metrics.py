"""Sequence similarity and mistake-detection metrics.

Mistakes are the positive class throughout. Ratios with a zero denominator
evaluate to 0.0 so corner-case baselines still produce finite tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence


def levenshtein_distance(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Unit-cost edit distance (insertions, deletions, substitutions)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        current = [i]
        for j, y in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (x != y)))
        previous = current
    return previous[-1]


def levenshtein_similarity(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """``1 - distance / max(len(a), len(b))``; two empty sequences score 1.0."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein_distance(a, b) / longest


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}

    @classmethod
    def tally(cls, predicted: Sequence[bool], actual: Sequence[bool]) -> ConfusionCounts:
        if len(predicted) != len(actual):
            raise ValueError(f"length mismatch: {len(predicted)} predictions vs {len(actual)} labels")
        tp = fp = tn = fn = 0
        for p, t in zip(predicted, actual):
            if p and t:
                tp += 1
            elif p:
                fp += 1
            elif t:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, tn, fn)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def precision(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp)


def recall(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fn)


def f1(c: ConfusionCounts) -> float:
    # 2PR/(P+R) simplifies to 2tp/(2tp+fp+fn), which avoids rounding in P and R.
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)


def balanced_accuracy(c: ConfusionCounts) -> float:
    return 0.5 * (_ratio(c.tp, c.tp + c.fn) + _ratio(c.tn, c.tn + c.fp))


def summarize(c: ConfusionCounts) -> dict:
    return {
        **c.to_dict(),
        "precision": precision(c),
        "recall": recall(c),
        "f1": f1(c),
        "balanced_accuracy": balanced_accuracy(c),
    }
