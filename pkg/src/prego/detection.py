"""Online mistake detection: compare recognized steps with anticipated ones.

A step is flagged when the recognized action is not what the anticipator
expected. Procedures are scored at two levels:

* sequence level, one decision per aggregated step;
* frame level, each step's decision repeated over the frames it spans and
  compared with per-frame ground truth.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .aggregation import AggregationConfig, smooth_and_collapse
from .anticipation.base import Anticipator, StepContext, Verdict, is_flagged, verdict_to_dict
from .anticipation.baselines import (
    CornerCase,
    CornerCaseAnticipator,
    NgramAnticipator,
    NgramModel,
    TransitionAnticipator,
    fit_transition_matrix,
)
from .anticipation.llm import Completer, LLMAnticipator
from .anticipation.prompts import DEFAULT_CONTEXT_CAP, Modality, Scheme, Transcript
from .dataset import VideoRecord
from .domain import ActionSequence, ActionVocabulary, FrameStream, InvalidInputError, MistakeAnnotation, segment_from_frames
from .llm.latency import LatencyLog
from .metrics import ConfusionCounts, summarize

REPORT_SCHEMA_VERSION = 1
ANTICIPATORS = ("transition", "ngram", "llm", "best", "worst", "random")


@dataclass(frozen=True)
class StepVerdict:
    step_index: int
    recognized: int
    anticipated: Verdict
    flagged: bool
    start: int
    end: int

    def to_dict(self) -> dict:
        return {
            "step": self.step_index,
            "recognized": self.recognized,
            "anticipated": verdict_to_dict(self.anticipated),
            "flagged": self.flagged,
            "span": [self.start, self.end],
        }


def detect_procedure(
    seq: ActionSequence,
    anticipator: Anticipator,
    video_id: str = "",
    task_id: str = "",
    is_mistake: bool = False,
    flag_no_prediction: bool = True,
) -> list[StepVerdict]:
    """Walk the steps in order; step t is anticipated from steps 0..t-1 only.

    ``is_mistake`` marks a procedure trimmed at its first mistake, whose last
    step is then the mistaken one. It reaches the anticipator only through
    ``StepContext`` for the oracle corner cases.
    """
    labels = seq.labels
    last = len(labels) - 1
    verdicts = []
    for t, seg in enumerate(seq.segments):
        ctx = StepContext(video_id, task_id, t, seg.label, is_mistake and t == last)
        verdict = anticipator.predict(tuple(labels[:t]), ctx)
        flagged = is_flagged(verdict, seg.label, flag_no_prediction)
        verdicts.append(StepVerdict(t, seg.label, verdict, flagged, seg.start, seg.end))
    return verdicts


def score_sequence_level(verdicts: Sequence[StepVerdict], annotation: MistakeAnnotation) -> ConfusionCounts:
    """The final step of a mistake procedure is the positive; all others are negatives."""
    if not verdicts:
        return ConfusionCounts()
    first = annotation.first_mistake_frame
    if first is not None and not first < verdicts[-1].end:
        raise InvalidInputError(
            f"first mistake at frame {first} lies beyond the evaluated {verdicts[-1].end} frames; "
            "mistake procedures must be trimmed to their first mistake"
        )
    actual = [False] * len(verdicts)
    if first is not None:
        actual[-1] = True
    return ConfusionCounts.tally([v.flagged for v in verdicts], actual)


def frame_flags(verdicts: Sequence[StepVerdict], n_frames: int) -> list[bool]:
    flags: list[bool] = []
    for v in verdicts:
        if v.start != len(flags):
            raise InvalidInputError(f"step {v.step_index} starts at frame {v.start}, expected {len(flags)}")
        flags.extend([v.flagged] * (v.end - v.start))
    if len(flags) != n_frames:
        raise InvalidInputError(f"verdicts cover {len(flags)} frames but the stream has {n_frames}")
    return flags


def expand_verdicts_to_frames(
    verdicts: Sequence[StepVerdict], gt_stream: FrameStream, annotation: MistakeAnnotation
) -> ConfusionCounts:
    """Score per frame: frames from the first mistake onwards are positives."""
    n = len(gt_stream)
    predicted = frame_flags(verdicts, n)
    first = annotation.first_mistake_frame
    actual = [False] * n if first is None else [i >= first for i in range(n)]
    return ConfusionCounts.tally(predicted, actual)


@dataclass(frozen=True)
class ProcedureResult:
    video_id: str
    task_id: str
    is_mistake: bool
    n_frames: int
    verdicts: tuple[StepVerdict, ...]
    sequence_counts: ConfusionCounts
    frame_counts: ConfusionCounts

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "task_id": self.task_id,
            "is_mistake": self.is_mistake,
            "n_frames": self.n_frames,
            "sequence_counts": self.sequence_counts.to_dict(),
            "frame_counts": self.frame_counts.to_dict(),
            "steps": [v.to_dict() for v in self.verdicts],
        }


@dataclass
class DetectionReport:
    config: dict
    procedures: list[ProcedureResult]
    manifest: dict = field(default_factory=dict)

    @property
    def sequence_counts(self) -> ConfusionCounts:
        return sum((p.sequence_counts for p in self.procedures), ConfusionCounts())

    @property
    def frame_counts(self) -> ConfusionCounts:
        return sum((p.frame_counts for p in self.procedures), ConfusionCounts())

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "manifest": self.manifest,
            "config": self.config,
            "sequence_level": summarize(self.sequence_counts),
            "frame_level": summarize(self.frame_counts),
            "procedures": [p.to_dict() for p in self.procedures],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render_table(self) -> str:
        rows = [("level", "precision", "recall", "f1", "bal_acc", "tp", "fp", "tn", "fn")]
        for level, counts in (("sequence", self.sequence_counts), ("frame", self.frame_counts)):
            s = summarize(counts)
            rows.append(
                (
                    level,
                    f"{s['precision']:.4f}",
                    f"{s['recall']:.4f}",
                    f"{s['f1']:.4f}",
                    f"{s['balanced_accuracy']:.4f}",
                    *(str(s[k]) for k in ("tp", "fp", "tn", "fn")),
                )
            )
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def evaluate_video(
    rec: VideoRecord,
    agg_cfg: AggregationConfig,
    anticipator: Anticipator,
    source: str = "recognizer",
    flag_no_prediction: bool = True,
) -> ProcedureResult:
    stream = rec.recognizer if source == "recognizer" else rec.gt
    # Non-procedural mistakes are scored as correct procedures.
    annotation = rec.annotation if rec.is_mistake else MistakeAnnotation()
    try:
        seq = smooth_and_collapse(stream, agg_cfg)
        verdicts = detect_procedure(seq, anticipator, rec.video_id, rec.task_id, rec.is_mistake, flag_no_prediction)
        seq_counts = score_sequence_level(verdicts, annotation)
        frame_counts = expand_verdicts_to_frames(verdicts, rec.gt, annotation)
    except InvalidInputError as exc:
        raise InvalidInputError(f"video {rec.video_id!r}: {exc}") from exc
    return ProcedureResult(
        rec.video_id, rec.task_id, rec.is_mistake, rec.n_frames, tuple(verdicts), seq_counts, frame_counts
    )


def run_pipeline(
    test: Sequence[VideoRecord],
    agg_cfg: AggregationConfig,
    anticipator: Anticipator,
    source: str = "recognizer",
    flag_no_prediction: bool = True,
    jobs: int = 1,
) -> DetectionReport:
    """Aggregate, detect and score every test video.

    ``source`` selects the stream fed to detection: the recognizer output, or
    the ground truth for the oracle-recognition setting.
    """
    if source not in ("recognizer", "gt"):
        raise InvalidInputError(f"source must be 'recognizer' or 'gt', got {source!r}")

    def one(rec: VideoRecord) -> ProcedureResult:
        return evaluate_video(rec, agg_cfg, anticipator, source, flag_no_prediction)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, test))
    else:
        results = [one(rec) for rec in test]
    config = {
        "aggregation": agg_cfg.to_dict(),
        "anticipator": anticipator.describe(),
        "source": source,
        "flag_no_prediction": flag_no_prediction,
    }
    return DetectionReport(config, results)


def training_transcripts(train: Sequence[VideoRecord]) -> list[Transcript]:
    """Ground-truth step sequences of the (correct) training videos."""
    return [Transcript(rec.task_id, tuple(segment_from_frames(rec.gt).labels)) for rec in train]


def build_anticipator(
    kind: str,
    train: Sequence[VideoRecord],
    vocab: ActionVocabulary,
    seed: int = 0,
    order: int = 2,
    scheme: Scheme = Scheme.ACOT,
    modality: Modality = Modality.TEXTUAL,
    client: Completer | None = None,
    context_cap: int = DEFAULT_CONTEXT_CAP,
    latency_log: LatencyLog | None = None,
) -> Anticipator:
    if kind in ("best", "worst", "random"):
        return CornerCaseAnticipator(CornerCase(kind), vocab.size, seed)
    transcripts = training_transcripts(train)
    if kind == "transition":
        return TransitionAnticipator(fit_transition_matrix([t.labels for t in transcripts], vocab.size))
    if kind == "ngram":
        return NgramAnticipator(NgramModel(order).fit([t.labels for t in transcripts]))
    if kind == "llm":
        if client is None:
            raise InvalidInputError("the llm anticipator needs a completion client")
        return LLMAnticipator(client, vocab, transcripts, scheme, modality, context_cap, latency_log)
    raise InvalidInputError(f"unknown anticipator {kind!r}; expected one of {', '.join(ANTICIPATORS)}")
