"""Core value types: vocabularies, frame streams, segments and sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence


class InvalidInputError(ValueError):
    """Raised when an operation receives input it cannot work with."""


class InvariantViolation(ValueError):
    """Raised when a value breaks one of its structural invariants."""


@dataclass(frozen=True)
class Action:
    label_id: int
    name: str
    verb: str = ""
    noun: str = ""


@dataclass(frozen=True)
class ActionVocabulary:
    entries: tuple[Action, ...]
    _by_name: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise InvariantViolation("vocabulary must contain at least one action")
        ids = [a.label_id for a in entries]
        if ids != list(range(len(entries))):
            raise InvariantViolation(f"label ids must be exactly 0..{len(entries) - 1} in order, got {ids}")
        by_name = {}
        for a in entries:
            if a.name in by_name:
                raise InvariantViolation(f"duplicate action name {a.name!r}")
            by_name[a.name] = a.label_id
        object.__setattr__(self, "_by_name", by_name)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> ActionVocabulary:
        entries = []
        for i, name in enumerate(names):
            verb, _, noun = name.partition("-")
            entries.append(Action(i, name, verb, noun))
        return cls(tuple(entries))

    @property
    def size(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def name_of(self, label_id: int) -> str:
        return self.entries[label_id].name

    def id_of(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise InvalidInputError(f"unknown action name {name!r}") from None

    def names(self) -> list[str]:
        return [a.name for a in self.entries]

    def is_valid(self, label_id: int) -> bool:
        return isinstance(label_id, int) and 0 <= label_id < len(self.entries)

    def to_dict(self) -> dict:
        return {"labels": [{"id": a.label_id, "name": a.name, "verb": a.verb, "noun": a.noun} for a in self.entries]}

    @classmethod
    def from_dict(cls, data: dict) -> ActionVocabulary:
        rows = sorted(data["labels"], key=lambda r: r["id"])
        return cls(tuple(Action(int(r["id"]), str(r["name"]), str(r.get("verb", "")), str(r.get("noun", ""))) for r in rows))


@dataclass(frozen=True)
class FrameStream:
    """Per-frame action labels for one video."""

    video_id: str
    fps: float
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        if not self.fps > 0:
            raise InvariantViolation(f"fps must be positive, got {self.fps}")

    def __len__(self) -> int:
        return len(self.labels)

    def validate(self, vocab: ActionVocabulary) -> None:
        if not self.labels:
            raise InvariantViolation(f"stream {self.video_id!r} is empty")
        for i, label in enumerate(self.labels):
            if not vocab.is_valid(label):
                raise InvariantViolation(f"stream {self.video_id!r} frame {i}: unknown label {label}")

    def with_labels(self, labels: Sequence[int]) -> FrameStream:
        return FrameStream(self.video_id, self.fps, tuple(labels))

    def head(self, n_frames: int) -> FrameStream:
        return FrameStream(self.video_id, self.fps, self.labels[:n_frames])


@dataclass(frozen=True)
class ActionSegment:
    label: int
    start: int
    end: int  # exclusive

    def __post_init__(self):
        if not self.start < self.end:
            raise InvariantViolation(f"segment span must satisfy start < end, got [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ActionSequence:
    segments: tuple[ActionSegment, ...]
    collapsed: bool = True

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        for prev, cur in zip(segments, segments[1:]):
            if cur.start != prev.end:
                raise InvariantViolation(f"segments are not contiguous: {prev} then {cur}")
            if self.collapsed and cur.label == prev.label:
                raise InvariantViolation(f"collapsed sequence repeats label {cur.label} at frame {cur.start}")

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def labels(self) -> list[int]:
        return [s.label for s in self.segments]

    @property
    def n_frames(self) -> int:
        return self.segments[-1].end - self.segments[0].start if self.segments else 0


@dataclass(frozen=True)
class MistakeAnnotation:
    first_mistake_frame: int | None = None
    category: str | None = None

    def check(self, n_frames: int) -> None:
        if self.first_mistake_frame is not None and not 0 <= self.first_mistake_frame < n_frames:
            raise InvariantViolation(
                f"first_mistake_frame {self.first_mistake_frame} outside stream of {n_frames} frames"
            )


def segment_from_frames(stream: FrameStream) -> ActionSequence:
    """Run-length encode a stream into maximal runs of equal labels."""
    labels = stream.labels
    if not labels:
        raise InvalidInputError(f"cannot segment empty stream {stream.video_id!r}")
    segments = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            segments.append(ActionSegment(labels[start], start, i))
            start = i
    return ActionSequence(tuple(segments), collapsed=True)


def flatten_to_frames(seq: ActionSequence, video_id: str = "", fps: float = 30.0) -> FrameStream:
    if not seq.segments:
        raise InvalidInputError("cannot flatten an empty sequence")
    if seq.segments[0].start != 0:
        raise InvariantViolation(f"sequence must start at frame 0, starts at {seq.segments[0].start}")
    labels: list[int] = []
    for prev, seg in zip((None, *seq.segments), seq.segments):
        if prev is not None and seg.start != prev.end:
            raise InvariantViolation(f"segments are not contiguous: {prev} then {seg}")
        labels.extend([seg.label] * seg.length)
    return FrameStream(video_id, fps, tuple(labels))


def collapse_labels(labels: Iterable[int]) -> list[int]:
    """Drop consecutive repeats, e.g. [1, 1, 2, 1] -> [1, 2, 1]."""
    out: list[int] = []
    for x in labels:
        if not out or out[-1] != x:
            out.append(x)
    return out
