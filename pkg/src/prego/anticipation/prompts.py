"""Prompt rendering for LLM-backed step anticipation.

Template text lives in ``templates/`` next to this module. Rendering is pure:
the same context always yields byte-identical prompts.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Sequence

from ..domain import ActionVocabulary, InvalidInputError

TEMPLATE_VERSION = "1"
REASONING_SLOT = "{reasoning}"
DEFAULT_CONTEXT_CAP = 5


class Scheme(str, Enum):
    ZERO_SHOT = "zs"
    FEW_SHOT = "fs"
    ACOT = "acot"


class Modality(str, Enum):
    TEXTUAL = "text"
    NUMERICAL = "num"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class Transcript:
    task_id: str
    labels: tuple[int, ...]


@dataclass(frozen=True)
class PromptContext:
    task_id: str
    current_sequence: tuple[int, ...]
    context_transcripts: tuple[Transcript, ...] = ()
    modality: Modality = Modality.TEXTUAL


@dataclass(frozen=True)
class PromptBundle:
    scheme: Scheme
    system: str
    stage_two_user: str
    stage_one_user: str | None = None

    def __post_init__(self):
        if (self.stage_one_user is not None) != (self.scheme is Scheme.ACOT):
            raise InvalidInputError("a reasoning stage is present exactly for ACoT prompts")

    def final_user(self, reasoning: str | None = None) -> str:
        """Second-stage text with the first-stage reasoning filled in."""
        if self.scheme is not Scheme.ACOT:
            return self.stage_two_user
        if reasoning is None:
            raise InvalidInputError("ACoT second stage needs the first-stage reasoning")
        return self.stage_two_user.replace(REASONING_SLOT, reasoning)


def render_action(label: int, vocab: ActionVocabulary, modality: Modality) -> str:
    if Modality(modality) is Modality.NUMERICAL:
        return str(label)
    return vocab.name_of(label)


def render_sequence(labels: Sequence[int], vocab: ActionVocabulary, modality: Modality) -> str:
    return ", ".join(render_action(x, vocab, modality) for x in labels)


def render_example(task: str, sequence: str, next_action: str = "") -> str:
    return load_template("example").format(task=task, sequence=sequence, next=next_action)


def render_transcript(t: Transcript, vocab: ActionVocabulary, modality: Modality) -> str:
    """A full transcript becomes one example: all but the last step, then the last."""
    *inputs, last = t.labels
    return render_example(t.task_id, render_sequence(inputs, vocab, modality), render_action(last, vocab, modality))


def select_context(
    training: Sequence[Transcript],
    task_id: str,
    cap: int = DEFAULT_CONTEXT_CAP,
    exclude: Sequence[Transcript] = (),
) -> tuple[Transcript, ...]:
    """Distinct same-task transcripts in dataset order, capped at ``cap``.

    When no transcript shares the task, the first ``cap`` transcripts of any
    task are used instead so few-shot prompts still carry examples.
    """
    pool = [t for t in dict.fromkeys(training) if t.labels and t not in exclude]
    same = [t for t in pool if t.task_id == task_id]
    return tuple((same or pool)[:cap])


def build_prompt(ctx: PromptContext, scheme: Scheme, vocab: ActionVocabulary) -> PromptBundle:
    scheme = Scheme(scheme)
    modality = Modality(ctx.modality)
    system = load_template("system")
    query = render_example(ctx.task_id, render_sequence(ctx.current_sequence, vocab, modality))

    if scheme is Scheme.ZERO_SHOT:
        return PromptBundle(scheme, load_template("zero_shot_instruction") + "\n\n" + system, query)

    if not ctx.context_transcripts:
        raise InvalidInputError(f"{scheme.value} prompting needs at least one context transcript")
    examples = "\n\n".join(render_transcript(t, vocab, modality) for t in ctx.context_transcripts)
    few_shot = examples + "\n\n" + query

    if scheme is Scheme.FEW_SHOT:
        return PromptBundle(scheme, system, few_shot)

    stage_one = few_shot + "\n" + load_template("acot_reasoning")
    stage_two = examples + "\n\n" + load_template("acot_answer") + "\n\n" + query
    return PromptBundle(scheme, system, stage_two, stage_one_user=stage_one)
