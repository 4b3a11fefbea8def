"""LLM-backed next-step anticipation."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol, Sequence

from ..domain import ActionVocabulary
from ..llm.latency import LatencyLog
from .base import Label, NoPrediction, StepContext, Verdict
from .prompts import (
    DEFAULT_CONTEXT_CAP,
    Modality,
    PromptBundle,
    PromptContext,
    Scheme,
    Transcript,
    build_prompt,
    select_context,
)

_STRIP = " \t\r\n\"'`.,;:!?"


class Completer(Protocol):
    def complete(self, system: str, user: str) -> tuple[str, float]: ...


@dataclass(frozen=True)
class AcotTrace:
    reasoning: str | None
    final_answer: str
    latencies: tuple[float, ...]

    @property
    def total_latency(self) -> float:
        return float(sum(self.latencies))


def _name_pattern(name: str) -> re.Pattern:
    return re.compile(r"(?<![\w-])" + re.escape(name.lower()) + r"(?![\w-])")


def parse_reply(text: str, vocab: ActionVocabulary, modality: Modality) -> Verdict:
    """Map a free-text reply onto a vocabulary label.

    Tried in order: the whole reply is a name (or an id, for numerical
    prompts); the longest action name occurring in the reply, the later one
    on ties; the last integer token that is a valid id (numerical only).
    """
    modality = Modality(modality)
    lowered = text.lower()
    cleaned = lowered.strip(_STRIP)
    names = {a.name.lower(): a.label_id for a in vocab.entries}

    if cleaned in names:
        return Label(names[cleaned])
    if cleaned.replace(" ", "-") in names:
        return Label(names[cleaned.replace(" ", "-")])
    if modality is Modality.NUMERICAL and cleaned.isdigit() and vocab.is_valid(int(cleaned)):
        return Label(int(cleaned))

    best = None  # (length, position, label)
    for name, label in names.items():
        for m in _name_pattern(name).finditer(lowered):
            key = (len(name), m.start(), label)
            if best is None or key[:2] > best[:2]:
                best = key
    if best is not None:
        return Label(best[2])

    if modality is Modality.NUMERICAL:
        for token in reversed(re.findall(r"(?<![\w.])\d+(?![\w.])", text)):
            if vocab.is_valid(int(token)):
                return Label(int(token))
    return NoPrediction(f"unparseable reply: {text[:80]!r}")


def llm_anticipate(
    ctx: PromptContext,
    scheme: Scheme,
    client: Completer,
    vocab: ActionVocabulary,
) -> tuple[Verdict, AcotTrace]:
    """Query the model once (ZS/FS) or twice (ACoT) and parse the final answer.

    Transport errors from ``client`` propagate; they are never turned into a
    ``NoPrediction``.
    """
    bundle: PromptBundle = build_prompt(ctx, scheme, vocab)
    latencies = []
    reasoning = None
    if bundle.stage_one_user is not None:
        reasoning, latency = client.complete(bundle.system, bundle.stage_one_user)
        latencies.append(latency)
    answer, latency = client.complete(bundle.system, bundle.final_user(reasoning))
    latencies.append(latency)
    verdict = parse_reply(answer, vocab, ctx.modality)
    return verdict, AcotTrace(reasoning, answer, tuple(latencies))


class LLMAnticipator:
    name = "llm"

    def __init__(
        self,
        client: Completer,
        vocab: ActionVocabulary,
        transcripts: Sequence[Transcript],
        scheme: Scheme = Scheme.ACOT,
        modality: Modality = Modality.TEXTUAL,
        context_cap: int = DEFAULT_CONTEXT_CAP,
        latency_log: LatencyLog | None = None,
    ):
        self.client = client
        self.vocab = vocab
        self.transcripts = tuple(transcripts)
        self.scheme = Scheme(scheme)
        self.modality = Modality(modality)
        self.context_cap = context_cap
        self.latency_log = latency_log
        self.traces: dict[tuple[str, int], AcotTrace] = {}

    def prompt_context(self, task_id: str, history: Sequence[int]) -> PromptContext:
        context = () if self.scheme is Scheme.ZERO_SHOT else select_context(self.transcripts, task_id, self.context_cap)
        return PromptContext(task_id, tuple(history), context, self.modality)

    def predict(self, history: Sequence[int], ctx: StepContext) -> Verdict:
        verdict, trace = llm_anticipate(self.prompt_context(ctx.task_id, history), self.scheme, self.client, self.vocab)
        self.traces[(ctx.video_id, ctx.step_index)] = trace
        if self.latency_log is not None:
            self.latency_log.record(self.scheme.value, ctx.video_id, ctx.step_index, trace.latencies)
        return verdict

    def describe(self) -> dict:
        return {
            "name": self.name,
            "scheme": self.scheme.value,
            "modality": self.modality.value,
            "context_cap": self.context_cap,
        }
