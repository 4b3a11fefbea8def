"""Anticipator verdicts and the contract every next-step predictor follows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, Union

from ..domain import InvariantViolation


@dataclass(frozen=True)
class Label:
    label: int


@dataclass(frozen=True)
class AllowedSet:
    """Any of ``labels`` is an acceptable next step."""

    labels: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(int(x) for x in self.labels))
        if not self.labels:
            raise InvariantViolation("AllowedSet must not be empty")


@dataclass(frozen=True)
class NoPrediction:
    reason: str = ""


Verdict = Union[Label, AllowedSet, NoPrediction]


def is_flagged(verdict: Verdict, recognized: int, flag_no_prediction: bool = True) -> bool:
    """Mistake rule: the recognized step disagrees with what was anticipated."""
    if isinstance(verdict, Label):
        return verdict.label != recognized
    if isinstance(verdict, AllowedSet):
        return recognized not in verdict.labels
    return flag_no_prediction


def verdict_to_dict(verdict: Verdict) -> dict:
    if isinstance(verdict, Label):
        return {"kind": "label", "label": verdict.label}
    if isinstance(verdict, AllowedSet):
        return {"kind": "allowed_set", "labels": sorted(verdict.labels)}
    return {"kind": "no_prediction", "reason": verdict.reason}


def verdict_from_dict(data: dict) -> Verdict:
    kind = data["kind"]
    if kind == "label":
        return Label(int(data["label"]))
    if kind == "allowed_set":
        return AllowedSet(frozenset(data["labels"]))
    if kind == "no_prediction":
        return NoPrediction(data.get("reason", ""))
    raise ValueError(f"unknown verdict kind {kind!r}")


@dataclass(frozen=True)
class StepContext:
    """What the harness knows about the step being anticipated.

    ``observed`` and ``is_mistake`` are oracle information. Only the corner-case
    baselines read them; real anticipators must rely on the history alone.
    """

    video_id: str
    task_id: str
    step_index: int
    observed: int
    is_mistake: bool


class Anticipator(Protocol):
    name: str

    def predict(self, history: Sequence[int], ctx: StepContext) -> Verdict: ...

    def describe(self) -> dict: ...
