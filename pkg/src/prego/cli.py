"""Command-line front end.

Exit codes: 0 success, 2 usage or input error, 3 external-service error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .aggregation import DEFAULT_WINDOW, AggregationConfig, Strategy, TieBreak, smooth_and_collapse
from .anticipation.llm import LLMAnticipator
from .anticipation.prompts import (
    DEFAULT_CONTEXT_CAP,
    TEMPLATE_VERSION,
    Modality,
    PromptContext,
    Scheme,
    build_prompt,
    select_context,
)
from .dataset import (
    DatasetError,
    SyntheticSpec,
    atomic_write_text,
    build_occ_split,
    dumps_records,
    dumps_vocab,
    generate_synthetic,
    load_dataset,
)
from .detection import ANTICIPATORS, build_anticipator, run_pipeline, training_transcripts
from .domain import InvalidInputError, InvariantViolation, segment_from_frames
from .llm.client import ClientConfig, CompletionClient, LLMError
from .llm.latency import LatencyLog
from .llm.stub import StubBehavior, StubServer
from .metrics import ConfusionCounts, levenshtein_similarity, summarize

log = logging.getLogger("prego")

EXIT_OK, EXIT_INPUT, EXIT_SERVICE = 0, 2, 3
DEFAULT_SWEEP_WINDOWS = (1, 50, 125, 250, 500, 1000)


class UsageError(Exception):
    pass


def manifest(argv: Sequence[str], config: dict, seeds: dict | None = None) -> dict:
    return {
        "command": ["prego", *argv],
        "config": config,
        "seeds": seeds or {},
        "version": __version__,
        "prompt_templates": TEMPLATE_VERSION,
    }


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _agg_config(args) -> AggregationConfig:
    return AggregationConfig(Strategy(args.strategy), args.window, TieBreak(args.tie_break))


def _add_agg_args(p: argparse.ArgumentParser, strategy_default: str = Strategy.NON_OVERLAPPING.value) -> None:
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=strategy_default)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW, help="window length in frames (default: %(default)s)")
    p.add_argument("--tie-break", choices=[t.value for t in TieBreak], default=TieBreak.SMALLEST_LABEL.value)


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="dataset JSONL file or directory of JSONL files")
    p.add_argument("--vocab", help="vocabulary JSON (default: sidecar next to the input)")


def _stream(rec, source: str):
    return rec.recognizer if source == "recognizer" else rec.gt


# ---------------------------------------------------------------- commands


def cmd_aggregate(args, argv) -> int:
    ds = load_dataset(args.input, args.vocab)
    cfg = _agg_config(args)
    rows, sims = [], []
    for rec in ds:
        seq = smooth_and_collapse(_stream(rec, args.source), cfg)
        sim = levenshtein_similarity(seq.labels, segment_from_frames(rec.gt).labels)
        sims.append(sim)
        rows.append(
            {
                "video_id": rec.video_id,
                "labels": seq.labels,
                "segments": [[s.label, s.start, s.end] for s in seq],
                "similarity": sim,
            }
        )
    text = "".join(json.dumps(r) + "\n" for r in rows)
    summary = {"videos": len(rows), "mean_similarity": float(np.mean(sims))}
    if args.out:
        atomic_write_text(args.out, text)
        meta = manifest(argv, {**cfg.to_dict(), "source": args.source}) | {"summary": summary}
        atomic_write_text(Path(args.out).with_suffix(".manifest.json"), _json(meta))
    else:
        sys.stdout.write(text)
    print(f"mean Levenshtein similarity over {len(rows)} videos: {summary['mean_similarity']:.4f}", file=sys.stderr)
    return EXIT_OK


def _parse_windows(text: str) -> list[int]:
    try:
        windows = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--windows must be a comma-separated list of integers, got {text!r}") from None
    if not windows:
        raise UsageError("--windows must list at least one window length")
    if any(w < 1 for w in windows):
        raise UsageError("window lengths must be positive")
    return windows


def sweep_table(ds, strategies: Sequence[Strategy], windows: Sequence[int], source: str = "recognizer", tie_break=TieBreak.SMALLEST_LABEL) -> list[dict]:
    targets = {rec.video_id: segment_from_frames(rec.gt).labels for rec in ds}
    rows = []
    for strategy in strategies:
        for w in windows:
            cfg = AggregationConfig(strategy, w, tie_break)
            sims = [
                levenshtein_similarity(smooth_and_collapse(_stream(rec, source), cfg).labels, targets[rec.video_id])
                for rec in ds
            ]
            rows.append({"strategy": strategy.value, "window": w, "videos": len(sims), "mean_similarity": float(np.mean(sims))})
    return rows


def cmd_sweep(args, argv) -> int:
    windows = _parse_windows(args.windows)
    ds = load_dataset(args.input, args.vocab)
    strategies = list(Strategy) if args.strategy == "all" else [Strategy(args.strategy)]
    rows = sweep_table(ds, strategies, windows, args.source, TieBreak(args.tie_break))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["strategy", "window", "videos", "mean_similarity"], lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({**r, "mean_similarity": f"{r['mean_similarity']:.6f}"})
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
        cfg = {"strategies": [s.value for s in strategies], "windows": windows, "source": args.source}
        atomic_write_text(Path(args.out).with_suffix(".manifest.json"), _json(manifest(argv, cfg)))
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _client(args) -> CompletionClient:
    cfg = ClientConfig.from_env(
        endpoint_url=args.endpoint,
        model_name=args.model,
        timeout=args.timeout,
        max_retries=args.retries,
        protocol=args.protocol,
        max_in_flight=max(1, args.jobs),
    )
    return CompletionClient(cfg)


def cmd_detect(args, argv) -> int:
    ds = load_dataset(args.input, args.vocab)
    train, test = build_occ_split(ds.records)
    if not test:
        raise InvalidInputError("the dataset has no test videos (no procedural mistakes and no test split hints)")
    latency = LatencyLog()
    client = _client(args) if args.anticipator == "llm" else None
    anticipator = build_anticipator(
        args.anticipator,
        train,
        ds.vocab,
        seed=args.seed,
        order=args.order,
        scheme=Scheme(args.scheme),
        modality=Modality(args.modality),
        client=client,
        context_cap=args.context_cap,
        latency_log=latency,
    )
    cfg = _agg_config(args)
    report = run_pipeline(test, cfg, anticipator, args.source, not args.no_flag_unparsed, args.jobs)
    config = {
        **report.config,
        "train_videos": len(train),
        "test_videos": len(test),
        "correct_test_scoring": "per-step",
    }
    report.manifest = manifest(argv, config, {"random": args.seed})
    body = report.to_dict()
    if isinstance(anticipator, LLMAnticipator):
        body["latency"] = latency.summary()
    text = _json(body)
    table = report.render_table()
    if args.out:
        atomic_write_text(args.out, text)
        atomic_write_text(Path(args.out).with_suffix(".txt"), table)
    else:
        sys.stdout.write(text)
    sys.stderr.write(table)
    return EXIT_OK


EVAL_FIELDS = ["report", "anticipator", "level", "precision", "recall", "f1", "balanced_accuracy", "tp", "fp", "tn", "fn"]


def _report_counts(path: str) -> tuple[str, dict[str, ConfusionCounts]]:
    """Re-total a saved report from its per-procedure counts."""
    try:
        body = json.loads(Path(path).read_text(encoding="utf-8"))
        totals = {"sequence": ConfusionCounts(), "frame": ConfusionCounts()}
        for proc in body["procedures"]:
            totals["sequence"] += ConfusionCounts(**proc["sequence_counts"])
            totals["frame"] += ConfusionCounts(**proc["frame_counts"])
        name = body["config"]["anticipator"]["name"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"cannot read report {path}: {exc}") from None
    return name, totals


def cmd_evaluate(args, argv) -> int:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=EVAL_FIELDS, lineterminator="\n")
    writer.writeheader()
    for path in args.reports:
        name, totals = _report_counts(path)
        for level, counts in totals.items():
            s = summarize(counts)
            row = {k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in s.items() if k in EVAL_FIELDS}
            writer.writerow({"report": path, "anticipator": name, "level": level, **row})
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_prompt_preview(args, argv) -> int:
    ds = load_dataset(args.input, args.vocab)
    train, test = build_occ_split(ds.records)
    try:
        rec = next(r for r in (*test, *train) if r.video_id == args.video)
    except StopIteration:
        raise InvalidInputError(f"no video {args.video!r} in {args.input}") from None
    seq = smooth_and_collapse(_stream(rec, args.source), _agg_config(args))
    if not 0 <= args.step < len(seq):
        raise InvalidInputError(f"step {args.step} out of range: video {rec.video_id!r} has {len(seq)} steps")
    history = tuple(seq.labels[: args.step])
    scheme = Scheme(args.scheme)
    transcripts = [t for t, r in zip(training_transcripts(train), train) if r.video_id != rec.video_id]
    context = () if scheme is Scheme.ZERO_SHOT else select_context(transcripts, rec.task_id, args.context_cap)
    bundle = build_prompt(PromptContext(rec.task_id, history, context, Modality(args.modality)), scheme, ds.vocab)
    out = [f"=== system ===\n{bundle.system}\n"]
    if bundle.stage_one_user is not None:
        out.append(f"=== stage 1: user ===\n{bundle.stage_one_user}\n")
        out.append(f"=== stage 2: user ===\n{bundle.stage_two_user}\n")
    else:
        out.append(f"=== user ===\n{bundle.stage_two_user}\n")
    sys.stdout.write("\n".join(out))
    return EXIT_OK


def cmd_generate(args, argv) -> int:
    data = {}
    if args.spec:
        try:
            data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInputError(f"cannot read spec {args.spec}: {exc}") from None
    if args.seed is not None:
        data["seed"] = args.seed
    n_train = int(data.pop("n_train", args.n_train))
    n_test = int(data.pop("n_test", args.n_test))
    try:
        spec = SyntheticSpec.from_dict(data)
    except (TypeError, ValueError, KeyError) as exc:
        raise InvalidInputError(f"invalid synthetic spec: {exc}") from None
    ds = generate_synthetic(spec, n_train, n_test)
    out = Path(args.out)
    data_path = out if out.suffix == ".jsonl" else out / "videos.jsonl"
    atomic_write_text(data_path, dumps_records(ds.records))
    atomic_write_text(data_path.with_name("vocab.json"), dumps_vocab(ds.vocab))
    cfg = {**spec.to_dict(), "n_train": n_train, "n_test": n_test}
    atomic_write_text(data_path.with_name("manifest.json"), _json(manifest(argv, cfg, {"synthetic": spec.seed})))
    print(f"wrote {len(ds)} videos to {data_path}", file=sys.stderr)
    return EXIT_OK


def cmd_stub_server(args, argv) -> int:
    behavior = StubBehavior.from_file(args.config) if args.config else StubBehavior(args.mode)
    server = StubServer(behavior, args.host, args.port)
    print(f"stub LLM server ({behavior.mode}) listening on {server.url}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prego", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="turn per-frame labels into action sequences")
    _add_input_args(p)
    _add_agg_args(p)
    p.add_argument("--source", choices=["recognizer", "gt"], default="recognizer")
    p.add_argument("--out", help="output JSONL (default: stdout)")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("sweep", help="Levenshtein similarity vs window length, as CSV")
    _add_input_args(p)
    p.add_argument("--strategy", choices=["all", *[s.value for s in Strategy]], default="all")
    p.add_argument("--windows", default=",".join(map(str, DEFAULT_SWEEP_WINDOWS)))
    p.add_argument("--tie-break", choices=[t.value for t in TieBreak], default=TieBreak.SMALLEST_LABEL.value)
    p.add_argument("--source", choices=["recognizer", "gt"], default="recognizer")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("detect", help="run online mistake detection and score it")
    _add_input_args(p)
    _add_agg_args(p)
    p.add_argument("--anticipator", choices=ANTICIPATORS, default="transition")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.ACOT.value)
    p.add_argument("--modality", choices=[m.value for m in Modality], default=Modality.TEXTUAL.value)
    p.add_argument("--seed", type=int, default=0, help="seed for the random anticipator")
    p.add_argument("--order", type=int, default=2, help="n-gram order")
    p.add_argument("--context-cap", type=int, default=DEFAULT_CONTEXT_CAP)
    p.add_argument("--source", choices=["recognizer", "gt"], default="recognizer")
    p.add_argument("--no-flag-unparsed", action="store_true", help="do not flag steps the anticipator could not predict")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--timeout", type=float)
    p.add_argument("--retries", type=int)
    p.add_argument("--protocol", choices=["prego", "chat"])
    p.add_argument("--out", help="report JSON; a .txt table is written next to it (default: stdout)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="re-score saved detect reports into one CSV")
    p.add_argument("reports", nargs="+", help="report JSON files written by detect")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("prompt-preview", help="print the exact prompts for one step")
    _add_input_args(p)
    _add_agg_args(p)
    p.add_argument("--video", required=True)
    p.add_argument("--step", type=int, required=True, help="0-based step to anticipate")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.ACOT.value)
    p.add_argument("--modality", choices=[m.value for m in Modality], default=Modality.TEXTUAL.value)
    p.add_argument("--context-cap", type=int, default=DEFAULT_CONTEXT_CAP)
    p.add_argument("--source", choices=["recognizer", "gt"], default="recognizer")
    p.set_defaults(func=cmd_prompt_preview)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--spec", help="JSON file with synthetic spec fields (default: built-in spec)")
    p.add_argument("--out", required=True, help="output directory, or a .jsonl path")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", type=int, default=20)
    p.add_argument("--n-test", type=int, default=20)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("stub-server", help="serve deterministic canned LLM replies")
    p.add_argument("--mode", choices=["echo", "canned", "scripted"], default="echo")
    p.add_argument("--config", help="JSON behaviour file (mode, canned, default_reply, script)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_stub_server)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        parser.error(str(exc))
    except (DatasetError, InvalidInputError, InvariantViolation) as exc:
        print(f"prego: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except LLMError as exc:
        print(f"prego: LLM service error: {exc}", file=sys.stderr)
        return EXIT_SERVICE


if __name__ == "__main__":
    sys.exit(main())
