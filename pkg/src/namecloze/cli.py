"""Command-line entry point: mine, split, stats, eval, conformance.

Flags are long-form kebab-case and may be preloaded from a UTF-8
"key = value" config file (flags win).  Exit codes: 0 success, 1 usage
error, 2 input or parse error, 3 scorer or detector protocol error.
"""
from __future__ import annotations

import argparse
import json
import sys
from multiprocessing import Pool
from pathlib import Path

from . import datasets, metrics, mining, names, stats, textio, wire
from .common import DetectorError, InputError, ProtocolError
from .scorer import LossParams, UnigramScorer

DEFAULT_ALPHA = 10.0
DEFAULT_BETA = 0.2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_config(path: str) -> dict[str, str]:
    config = {}
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def _setting(args, config: dict, key: str, default, cast=str):
    """Flag value if given, else config file value, else the default."""
    flag = getattr(args, key.replace("-", "_"))
    if flag is not None:
        return flag
    if key in config:
        raw = config[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def _required(args, config: dict, key: str, cast=str):
    value = _setting(args, config, key, None, cast)
    if value is None:
        raise UsageError(f"--{key} is required (flag or config file)")
    return value


def build_parser() -> _Parser:
    parser = _Parser(prog="namecloze", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    mine = sub.add_parser("mine", help="mine masked examples from a corpus")
    mine.add_argument("--input", help="corpus path (dump file or text dir)")
    mine.add_argument("--input-format", choices=["auto", "wiki-dump", "plain-text"])
    mine.add_argument("--output", help="dataset file to write")
    mine.add_argument("--detector", help="builtin or external:COMMAND")
    mine.add_argument("--workers", type=int)
    mine.add_argument("--deterministic", action="store_true", default=None,
                      help="guarantee byte-identical output for any worker count")
    mine.add_argument("--summary", help="also write summary records to this file")
    mine.add_argument("--config")

    split = sub.add_parser("split", help="hold out a validation set")
    split.add_argument("--input")
    split.add_argument("--train-output")
    split.add_argument("--validation-output")
    split.add_argument("--holdout-n", type=int)
    split.add_argument("--seed", type=int)
    split.add_argument("--config")

    st = sub.add_parser("stats", help="dataset statistics reports")
    st.add_argument("--input", help="mined dataset for the gender report")
    st.add_argument("--gender-gazetteer", help="name<TAB>class table")
    st.add_argument("--annotations", help="annotation fixture file, or 'builtin'")
    st.add_argument("--config")

    ev = sub.add_parser("eval", help="evaluate a scorer on a dataset")
    ev.add_argument("--input", nargs="+",
                    help="dataset file(s) of the given kind")
    ev.add_argument("--dataset-kind", choices=datasets.DATASET_KINDS)
    ev.add_argument("--scorer",
                    help="reference:VOCAB.json or external:COMMAND")
    ev.add_argument("--detector", help="builtin or external:COMMAND")
    ev.add_argument("--split", help="override the split tag for loaded items")
    ev.add_argument("--floor", type=float, help="reference scorer unseen-token count")
    ev.add_argument("--alpha", type=float)
    ev.add_argument("--beta", type=float)
    ev.add_argument("--seed", type=int)
    ev.add_argument("--workers", type=int)
    ev.add_argument("--deterministic", action="store_true", default=None)
    ev.add_argument("--run-label", help="free-form label naming the scorer run")
    ev.add_argument("--config")

    conf = sub.add_parser("conformance", help="check an external scorer against the protocol")
    conf.add_argument("--scorer", required=True, help="external:COMMAND or COMMAND")
    return parser


def _make_detector(spec: str):
    if spec == "builtin":
        return names.GazetteerDetector()
    if spec.startswith("external:"):
        return wire.ExternalDetector(spec[len("external:"):])
    raise UsageError(f"bad detector spec {spec!r}")


def _make_scorer(spec: str, floor: float, workers: int = 1):
    if spec.startswith("reference:"):
        vocab_path = spec[len("reference:"):]
        try:
            with open(vocab_path, encoding="utf-8") as handle:
                counts = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot load vocabulary {vocab_path}: {exc}") from exc
        return UnigramScorer(counts, floor_count=floor)
    if spec.startswith("external:"):
        command = spec[len("external:"):]
        if workers > 1:
            return wire.ScorerPool(command, size=workers)
        return wire.ExternalScorer(command)
    raise UsageError(f"bad scorer spec {spec!r}")


# --- mine --------------------------------------------------------------------

_WORKER_DETECTOR = None


def _init_worker(detector_spec: str) -> None:
    global _WORKER_DETECTOR
    _WORKER_DETECTOR = _make_detector(detector_spec)


def _mine_document(doc: textio.Document):
    counters: dict[str, int] = {}
    sentences = textio.segment_sentences(doc.text)
    pairs = []
    for passage in textio.windows(doc, sentences):
        try:
            mentions = names.detect_names(passage, _WORKER_DETECTOR)
        except DetectorError:
            counters["detector_errors"] = counters.get("detector_errors", 0) + 1
            continue
        counters["passages"] = counters.get("passages", 0) + 1
        pairs.append((passage, mentions))
    examples = mining.mine_document_passages(pairs, counters)
    return examples, counters


def cmd_mine(args, config: dict) -> int:
    source = _required(args, config, "input")
    source_format = _setting(args, config, "input-format", "auto")
    output = _required(args, config, "output")
    detector_spec = _setting(args, config, "detector", "builtin")
    workers = max(1, _setting(args, config, "workers", 1, int))
    summary_path = _setting(args, config, "summary", None)

    totals: dict[str, int] = {"documents": 0, "examples": 0}

    def merge(counters: dict) -> None:
        for key, value in counters.items():
            totals[key] = totals.get(key, 0) + value

    def warn(message: str) -> None:
        totals["source_warnings"] = totals.get("source_warnings", 0) + 1
        print(f"warning: {message}", file=sys.stderr)

    written = 0
    with open(output, "w", encoding="utf-8") as out:
        docs = textio.stream_documents(source, source_format, warn=warn)
        if workers == 1:
            _init_worker(detector_spec)
            results = map(_mine_document, docs)
            for examples, counters in results:
                totals["documents"] += 1
                merge(counters)
                written += mining.write_records(out, examples)
                totals["examples"] = written
        else:
            with Pool(workers, initializer=_init_worker, initargs=(detector_spec,)) as pool:
                for examples, counters in pool.imap(_mine_document, docs):
                    totals["documents"] += 1
                    merge(counters)
                    written += mining.write_records(out, examples)
                    totals["examples"] = written

    _emit_report(totals, summary_path, title="mining summary")
    return 0


def _emit_report(record: dict, summary_path: str | None, title: str) -> None:
    line = json.dumps(record, ensure_ascii=False, sort_keys=True)
    print(line)
    width = max((len(k) for k in record), default=0)
    print(f"# {title}")
    for key in sorted(record):
        print(f"  {key.ljust(width)}  {record[key]}")
    if summary_path:
        Path(summary_path).write_text(line + "\n", encoding="utf-8")


# --- split ---------------------------------------------------------------------


def cmd_split(args, config: dict) -> int:
    n = _required(args, config, "holdout-n", int)
    seed = _setting(args, config, "seed", 0, int)
    examples = list(mining.read_records(_required(args, config, "input")))
    try:
        train, validation = mining.holdout_split(examples, n, seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    mining.write_records(_required(args, config, "train-output"), train)
    mining.write_records(_required(args, config, "validation-output"), validation)
    _emit_report({"train": len(train), "validation": len(validation), "seed": seed},
                 None, title="split summary")
    return 0


# --- stats -----------------------------------------------------------------------


def cmd_stats(args, config: dict) -> int:
    dataset_path = _setting(args, config, "input", None)
    annotations = _setting(args, config, "annotations", None)
    emitted = False
    if dataset_path:
        table = stats.load_gender_table(_setting(args, config, "gender-gazetteer", None))
        report = stats.gender_ratio(mining.read_records(dataset_path), table)
        record = {"report": "gender", **report.counts,
                  "female_male_ratio": report.female_male_ratio}
        _emit_report(record, None, title="gender report")
        emitted = True
    if annotations:
        path = None if annotations == "builtin" else annotations
        report = stats.annotation_report(stats.load_annotations(path))
        record = {
            "report": "annotations",
            "total": report.total,
            "unsolvable": report.unsolvable,
            "solvable": report.solvable,
            "annotator_accuracy": report.annotator_accuracy,
            "natural_fraction": report.natural_fraction,
        }
        _emit_report(record, None, title="annotation report")
        emitted = True
    if not emitted:
        raise UsageError("stats needs --input and/or --annotations")
    return 0


# --- eval ------------------------------------------------------------------------


def cmd_eval(args, config: dict) -> int:
    kind = _required(args, config, "dataset-kind")
    if kind not in datasets.DATASET_KINDS:
        raise UsageError(f"unknown dataset kind {kind!r}")
    paths = args.input if args.input else _required(args, config, "input").split()
    split = _setting(args, config, "split", None)
    floor = _setting(args, config, "floor", 1.0, float)
    alpha = _setting(args, config, "alpha", DEFAULT_ALPHA, float)
    beta = _setting(args, config, "beta", DEFAULT_BETA, float)
    workers = max(1, _setting(args, config, "workers", 1, int))
    scorer_spec = _required(args, config, "scorer")
    detector_spec = _setting(args, config, "detector", "builtin")

    items = []
    for path in paths:
        items.extend(datasets.load_dataset(kind, path, split=split))
    detector = None
    extraction_failures = 0
    if kind == "gap":
        detector = _make_detector(detector_spec)
        items, extraction_failures = datasets.prepare_gap(items, detector)

    scorer = _make_scorer(scorer_spec, floor, workers=workers)
    try:
        result = metrics.evaluate(items, scorer, loss_params=LossParams(alpha, beta),
                                  workers=workers)
    finally:
        if hasattr(scorer, "close"):
            scorer.close()
        if detector is not None and hasattr(detector, "close"):
            detector.close()

    record = result.as_dict()
    record["dataset_kind"] = kind
    record["scorer"] = _setting(args, config, "run-label", None) or scorer_spec
    if kind == "gap":
        record["detector_failures"] = extraction_failures
        record["f1_cap"] = metrics.f1_cap(items) if any(
            item.labels and any(item.labels) for item in items) else None
    flat = {k: v for k, v in record.items() if not isinstance(v, dict)}
    print(json.dumps(record, ensure_ascii=False, sort_keys=True))
    width = max(len(k) for k in flat)
    print("# evaluation report")
    for key in sorted(flat):
        print(f"  {key.ljust(width)}  {flat[key]}")
    for tag, table in record.get("per_subset", {}).items():
        for value in sorted(table):
            print(f"  {tag}={value}  accuracy {table[value]:.4f}")
    return 0


# --- conformance --------------------------------------------------------------------


def cmd_conformance(args, config: dict) -> int:
    spec = args.scorer
    command = spec[len("external:"):] if spec.startswith("external:") else spec
    report = wire.run_scorer_conformance(command)
    print(report.summary())
    if not report.passed:
        raise ProtocolError("conformance checks failed")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required (mine, split, stats, eval, conformance)")
        config = _read_config(args.config) if getattr(args, "config", None) else {}
        handler = {
            "mine": cmd_mine,
            "split": cmd_split,
            "stats": cmd_stats,
            "eval": cmd_eval,
            "conformance": cmd_conformance,
        }[args.command]
        return handler(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (ProtocolError, DetectorError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
