"""Dataset ingestion, one-class split construction, and synthetic procedures.

On-disk format: a JSONL file with one object per video plus a sidecar
vocabulary file ``{"labels": [{"id", "name", "verb", "noun"}, ...]}``::

    {"video_id": "v1", "task_id": "bulldozer", "fps": 30,
     "recognizer_labels": [0, 0, 3, ...], "gt_labels": [0, 0, 0, ...],
     "first_mistake_frame": 812, "mistake_category": "order"}
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import (
    Action,
    ActionVocabulary,
    FrameStream,
    InvariantViolation,
    MistakeAnnotation,
    segment_from_frames,
)

log = logging.getLogger(__name__)

PROCEDURAL_CATEGORIES = ("order", "omit", "correction", "repeat")
NON_PROCEDURAL_CATEGORIES = ("slow", "search", "misuse", "motor", "failure")
FIELDS = (
    "video_id",
    "task_id",
    "fps",
    "recognizer_labels",
    "gt_labels",
    "first_mistake_frame",
    "mistake_category",
    "split_hint",
)
OPTIONAL_FIELDS = ("split_hint",)
VOCAB_FILENAME = "vocab.json"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    task_id: str
    fps: float
    recognizer: FrameStream
    gt: FrameStream
    annotation: MistakeAnnotation = MistakeAnnotation()
    split_hint: str | None = None

    def __post_init__(self):
        if len(self.recognizer) != len(self.gt):
            raise InvariantViolation(
                f"video {self.video_id!r}: recognizer stream has {len(self.recognizer)} frames, "
                f"ground truth has {len(self.gt)}"
            )
        if self.recognizer.fps != self.gt.fps:
            raise InvariantViolation(f"video {self.video_id!r}: recognizer and ground-truth fps differ")
        self.annotation.check(len(self.gt))

    @property
    def n_frames(self) -> int:
        return len(self.gt)

    @property
    def is_mistake(self) -> bool:
        """True for a procedural mistake; non-procedural categories count as correct."""
        a = self.annotation
        return a.first_mistake_frame is not None and (a.category is None or a.category in PROCEDURAL_CATEGORIES)

    def trimmed(self, n_frames: int) -> VideoRecord:
        return replace(self, recognizer=self.recognizer.head(n_frames), gt=self.gt.head(n_frames))

    def to_json(self) -> dict:
        row = {
            "video_id": self.video_id,
            "task_id": self.task_id,
            "fps": self.fps,
            "recognizer_labels": list(self.recognizer.labels),
            "gt_labels": list(self.gt.labels),
            "first_mistake_frame": self.annotation.first_mistake_frame,
            "mistake_category": self.annotation.category,
        }
        if self.split_hint is not None:
            row["split_hint"] = self.split_hint
        return row


@dataclass(frozen=True)
class Dataset:
    vocab: ActionVocabulary
    records: tuple[VideoRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, video_id: str) -> VideoRecord:
        for r in self.records:
            if r.video_id == video_id:
                return r
        raise KeyError(video_id)


def _check_int_list(value, what: str) -> list[int]:
    if not isinstance(value, list) or not value:
        raise DatasetError(f"{what} must be a non-empty list of integers")
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        raise DatasetError(f"{what} must contain only integers")
    return value


def parse_record(row: dict, vocab: ActionVocabulary) -> VideoRecord:
    if not isinstance(row, dict):
        raise DatasetError("each line must be a JSON object")
    missing = [k for k in FIELDS if k not in row and k not in OPTIONAL_FIELDS]
    unknown = sorted(set(row) - set(FIELDS))
    if missing or unknown:
        raise DatasetError(f"missing fields {missing}, unknown fields {unknown}")
    video_id, task_id, fps = row["video_id"], row["task_id"], row["fps"]
    if not isinstance(video_id, str) or not isinstance(task_id, str):
        raise DatasetError("video_id and task_id must be strings")
    if isinstance(fps, bool) or not isinstance(fps, (int, float)) or not fps > 0:
        raise DatasetError(f"video {video_id!r}: fps must be a positive number")
    rec = _check_int_list(row["recognizer_labels"], f"video {video_id!r}: recognizer_labels")
    gt = _check_int_list(row["gt_labels"], f"video {video_id!r}: gt_labels")
    for name, labels in (("recognizer_labels", rec), ("gt_labels", gt)):
        bad = next((x for x in labels if not vocab.is_valid(x)), None)
        if bad is not None:
            raise DatasetError(f"video {video_id!r}: {name} contains unknown label {bad}")
    first = row["first_mistake_frame"]
    if first is not None and (isinstance(first, bool) or not isinstance(first, int)):
        raise DatasetError(f"video {video_id!r}: first_mistake_frame must be an integer or null")
    category = row["mistake_category"]
    if category is not None and category not in PROCEDURAL_CATEGORIES + NON_PROCEDURAL_CATEGORIES:
        raise DatasetError(f"video {video_id!r}: unknown mistake category {category!r}")
    split_hint = row.get("split_hint")
    if split_hint not in (None, "train", "test"):
        raise DatasetError(f"video {video_id!r}: split_hint must be 'train', 'test' or null")
    try:
        return VideoRecord(
            video_id,
            task_id,
            fps,
            FrameStream(video_id, fps, rec),
            FrameStream(video_id, fps, gt),
            MistakeAnnotation(first, category),
            split_hint,
        )
    except InvariantViolation as exc:
        raise DatasetError(str(exc)) from None


def load_vocab(path: str | os.PathLike) -> ActionVocabulary:
    try:
        with open(path, encoding="utf-8") as fh:
            return ActionVocabulary.from_dict(json.load(fh))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: invalid vocabulary file: {exc}") from None


def _sidecar(path: Path) -> Path:
    own = path.with_name(path.stem + ".vocab.json")
    return own if own.exists() else path.with_name(VOCAB_FILENAME)


def load_dataset(path: str | os.PathLike, vocab_path: str | os.PathLike | None = None) -> Dataset:
    """Load one JSONL file, or every ``*.jsonl`` file in a directory.

    The vocabulary comes from ``vocab_path`` or, by default, from
    ``<stem>.vocab.json`` / ``vocab.json`` next to the data.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.jsonl"))
        default_vocab = path / VOCAB_FILENAME
    else:
        files = [path]
        default_vocab = _sidecar(path)
    if not files:
        raise DatasetError(f"{path}: no .jsonl files found")
    vocab = load_vocab(vocab_path or default_vocab)
    records: list[VideoRecord] = []
    seen: dict[str, str] = {}
    for file in files:
        try:
            lines = file.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DatasetError(f"{file}: {exc}") from None
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            where = f"{file}:{lineno}"
            try:
                rec = parse_record(json.loads(line), vocab)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid JSON: {exc}") from None
            except DatasetError as exc:
                raise DatasetError(f"{where}: {exc}") from None
            if rec.video_id in seen:
                raise DatasetError(f"{where}: duplicate video_id {rec.video_id!r} (first seen in {seen[rec.video_id]})")
            seen[rec.video_id] = where
            records.append(rec)
    return Dataset(vocab, tuple(records))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def dumps_records(records: Iterable[VideoRecord]) -> str:
    return "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in records)


def dumps_vocab(vocab: ActionVocabulary) -> str:
    return json.dumps(vocab.to_dict(), ensure_ascii=False, indent=2) + "\n"


def write_dataset(dataset: Dataset, path: str | os.PathLike, vocab_path: str | os.PathLike | None = None) -> None:
    path = Path(path)
    atomic_write_text(path, dumps_records(dataset.records))
    atomic_write_text(vocab_path or path.with_name(VOCAB_FILENAME), dumps_vocab(dataset.vocab))


# --------------------------------------------------------------------------- split


def trim_to_first_mistake(rec: VideoRecord) -> VideoRecord:
    """Cut the video after the ground-truth step that contains the first mistake."""
    first = rec.annotation.first_mistake_frame
    if first is None:
        return rec
    for seg in segment_from_frames(rec.gt):
        if seg.start <= first < seg.end:
            return rec.trimmed(seg.end)
    raise AssertionError("unreachable: annotation was range-checked on construction")


def build_occ_split(records: Sequence[VideoRecord]) -> tuple[list[VideoRecord], list[VideoRecord]]:
    """One-class split: correct procedures train, procedural mistakes test.

    Mistake videos are trimmed to their first mistaken step. Correct videos
    go to training unless ``split_hint`` is ``"test"``, in which case they are
    tested in full. A ``"train"`` hint cannot pull a mistake into training.
    """
    train, test = [], []
    for rec in records:
        if rec.is_mistake:
            if rec.split_hint == "train":
                log.warning("video %s has a procedural mistake; ignoring its train split hint", rec.video_id)
            test.append(trim_to_first_mistake(rec))
            continue
        correct = replace(rec, annotation=MistakeAnnotation(None, rec.annotation.category))
        (test if rec.split_hint == "test" else train).append(correct)
    return train, test


# ----------------------------------------------------------------------- synthetic


class MistakeKind(str, Enum):
    SWAP_ADJACENT = "swap"
    OMIT_STEP = "omit"
    INSERT_FOREIGN = "insert"


MISTAKE_CATEGORY = {MistakeKind.SWAP_ADJACENT: "order", MistakeKind.OMIT_STEP: "omit", MistakeKind.INSERT_FOREIGN: None}

_VERBS = ("attach", "detach", "screw", "unscrew", "insert", "remove", "position", "align")
_NOUNS = ("cabin", "body", "track", "blade", "figurine", "wheel", "chassis", "roof", "bumper", "arm", "bucket", "lights")


def synthetic_vocab(size: int) -> ActionVocabulary:
    pairs = list(product(_VERBS, _NOUNS))
    if size > len(pairs):
        raise ValueError(f"synthetic vocabularies are limited to {len(pairs)} actions")
    return ActionVocabulary(tuple(Action(i, f"{v}-{n}", v, n) for i, (v, n) in enumerate(pairs[:size])))


@dataclass(frozen=True)
class GrammarTask:
    task_id: str
    sequences: tuple[tuple[int, ...], ...]


def default_grammar(vocab_size: int = 24, n_tasks: int = 4, steps: int = 8, seed: int = 1234) -> tuple[GrammarTask, ...]:
    """Tasks with two valid orderings each; the second swaps two middle steps."""
    rng = np.random.default_rng(seed)
    tasks = []
    for t in range(n_tasks):
        base = tuple(int(x) for x in rng.choice(vocab_size, size=steps, replace=False))
        i = steps // 2
        variant = base[: i - 1] + (base[i], base[i - 1]) + base[i + 1 :]
        tasks.append(GrammarTask(f"toy-{t}", (base, variant)))
    return tuple(tasks)


@dataclass(frozen=True)
class SyntheticSpec:
    vocab_size: int = 24
    grammar: tuple[GrammarTask, ...] = field(default_factory=default_grammar)
    mean_segment: float = 570.0
    segment_spread: float = 60.0
    noise: float = 0.2
    mistake: MistakeKind = MistakeKind.SWAP_ADJACENT
    seed: int = 0
    fps: float = 30.0
    unseen_only: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mistake", MistakeKind(self.mistake))
        if not 0 <= self.noise < 1:
            raise ValueError(f"noise rate must be in [0, 1), got {self.noise}")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be at least 2")
        if not self.mean_segment >= 1 or self.segment_spread < 0:
            raise ValueError("mean_segment must be >= 1 and segment_spread >= 0")
        if not self.grammar:
            raise ValueError("grammar must contain at least one task")
        for task in self.grammar:
            if not task.sequences:
                raise ValueError(f"task {task.task_id!r} has no sequences")
            for seq in task.sequences:
                if len(seq) < 2:
                    raise ValueError(f"task {task.task_id!r}: sequences need at least two steps")
                if any(not 0 <= x < self.vocab_size for x in seq):
                    raise ValueError(f"task {task.task_id!r}: label outside vocabulary")
                if any(a == b for a, b in zip(seq, seq[1:])):
                    raise ValueError(f"task {task.task_id!r}: adjacent steps must differ")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mistake"] = self.mistake.value
        out["grammar"] = [{"task_id": t.task_id, "sequences": [list(s) for s in t.sequences]} for t in self.grammar]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> SyntheticSpec:
        data = dict(data)
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        if "grammar" in data:
            data["grammar"] = tuple(
                GrammarTask(str(t["task_id"]), tuple(tuple(int(x) for x in s) for s in t["sequences"]))
                for t in data["grammar"]
            )
        return cls(**data)


def _grammar_transitions(grammar: Sequence[GrammarTask]) -> tuple[set[tuple[int, int]], set[int]]:
    pairs, starts = set(), set()
    for task in grammar:
        for seq in task.sequences:
            starts.add(seq[0])
            pairs.update(zip(seq, seq[1:]))
    return pairs, starts


def inject_mistake(
    steps: Sequence[int],
    kind: MistakeKind,
    rng: np.random.Generator,
    vocab_size: int,
    seen_pairs: set[tuple[int, int]] | None = None,
    seen_starts: set[int] | None = None,
) -> tuple[list[int], int]:
    """Return the corrupted step list and the index of its first mistaken step.

    With ``seen_pairs``/``seen_starts`` given, only injections whose step into
    the mistake is an unseen transition are accepted.
    """
    steps = list(steps)
    n = len(steps)
    kind = MistakeKind(kind)

    def candidates():
        if kind is MistakeKind.SWAP_ADJACENT:
            for j in range(n - 1):
                new = steps[:j] + [steps[j + 1], steps[j]] + steps[j + 2 :]
                yield new, j
        elif kind is MistakeKind.OMIT_STEP:
            for j in range(n - 1):
                yield steps[:j] + steps[j + 1 :], j
        else:
            foreign = [x for x in range(vocab_size) if x not in steps]
            for j in range(n):
                for f in rng.permutation(foreign).tolist():
                    yield steps[:j] + [f] + steps[j:], j

    def acceptable(new: list[int], j: int) -> bool:
        if any(a == b for a, b in zip(new, new[1:])):
            return False
        if seen_pairs is None:
            return True
        if j == 0:
            return new[0] not in (seen_starts or set())
        return (new[j - 1], new[j]) not in seen_pairs

    options = [c for c in candidates() if acceptable(*c)]
    if not options:
        raise ValueError(f"no valid {kind.value} injection for steps {steps}")
    new, j = options[int(rng.integers(len(options)))]
    return new, j


def _durations(spec: SyntheticSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.normal(spec.mean_segment, spec.segment_spread, size=n)
    return np.maximum(1, np.rint(raw)).astype(np.int64)


def _corrupt(gt: np.ndarray, p: float, vocab_size: int, rng: np.random.Generator) -> np.ndarray:
    flip = rng.random(len(gt)) < p
    other = rng.integers(vocab_size - 1, size=len(gt))
    other = other + (other >= gt)  # uniform over the labels that differ from gt
    return np.where(flip, other, gt)


def generate_synthetic(spec: SyntheticSpec, n_train: int, n_test: int) -> Dataset:
    """Correct training videos and test videos with one injected mistake each.

    The recognizer stream is the ground truth with every frame independently
    replaced, with probability ``spec.noise``, by a uniformly drawn wrong label.
    """
    rng = np.random.default_rng(spec.seed)
    vocab = synthetic_vocab(spec.vocab_size)
    pairs, starts = _grammar_transitions(spec.grammar)
    records = []
    for split, count in (("train", n_train), ("test", n_test)):
        for i in range(count):
            task = spec.grammar[i % len(spec.grammar)]
            steps = list(task.sequences[int(rng.integers(len(task.sequences)))])
            j = None
            if split == "test":
                seen = (pairs, starts) if spec.unseen_only else (None, None)
                steps, j = inject_mistake(steps, spec.mistake, rng, spec.vocab_size, *seen)
            durations = _durations(spec, len(steps), rng)
            if j is None:
                annotation = MistakeAnnotation()
            else:
                annotation = MistakeAnnotation(int(durations[:j].sum()), MISTAKE_CATEGORY[spec.mistake])
            gt = np.repeat(np.asarray(steps, dtype=np.int64), durations)
            rec = _corrupt(gt, spec.noise, spec.vocab_size, rng)
            video_id = f"syn-{split}-{i:04d}"
            records.append(
                VideoRecord(
                    video_id,
                    task.task_id,
                    spec.fps,
                    FrameStream(video_id, spec.fps, rec.tolist()),
                    FrameStream(video_id, spec.fps, gt.tolist()),
                    annotation,
                )
            )
    return Dataset(vocab, tuple(records))
