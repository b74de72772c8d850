"""Reference wire-protocol server: run the built-in scorer or detector
as an external process.

    python -m namecloze.refserver --role scorer --vocab counts.json
    python -m namecloze.refserver --role detector [--gazetteer g.txt]

Useful as a protocol example, as the conformance-suite target, and for
exercising the subprocess client without a real language model.
"""
from __future__ import annotations

import argparse
import json
import sys

from .common import PROTOCOL_VERSION
from .names import GazetteerDetector, load_gazetteer, load_wordlist
from .scorer import ScoreQuery, UnigramScorer


def _reply(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False) + "\n")
    sys.stdout.flush()


def _error(query_id, message: str) -> None:
    _reply({"kind": "error", "query_id": query_id, "message": message})


def serve(scorer: UnigramScorer | None, detector: GazetteerDetector | None,
          stdin=None) -> None:
    stdin = stdin or sys.stdin
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            _error(None, f"bad JSON: {exc}")
            continue
        query_id = message.get("query_id") if isinstance(message, dict) else None
        if not isinstance(message, dict) or "kind" not in message:
            _error(query_id, "message must be an object with a 'kind'")
            continue
        kind = message["kind"]
        try:
            if kind == "hello":
                _reply({"kind": "hello", "protocol": PROTOCOL_VERSION})
            elif kind == "score":
                if scorer is None:
                    _error(query_id, "this server has no scorer role")
                    continue
                query = ScoreQuery(query_id, message["masked_text"],
                                   tuple(message["candidates"]))
                scores = scorer.score(query)
                _reply({"kind": "scores", "query_id": query_id,
                        "logprobs": list(scores.logprobs)})
            elif kind == "score_tokens":
                if scorer is None:
                    _error(query_id, "this server has no scorer role")
                    continue
                logprobs = scorer.token_logprobs(message["candidate"])
                _reply({"kind": "token_scores", "query_id": query_id,
                        "logprobs": logprobs})
            elif kind == "detect":
                if detector is None:
                    _error(query_id, "this server has no detector role")
                    continue
                spans = detector.detect_text(message["text"])
                _reply({"kind": "mentions", "query_id": query_id,
                        "mentions": [[s, e] for _, s, e in spans]})
            else:
                _error(query_id, f"unknown message kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            _error(query_id, f"bad {kind} request: {exc}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--role", choices=["scorer", "detector"], required=True)
    parser.add_argument("--vocab", help="JSON token->count table (scorer role)")
    parser.add_argument("--floor", type=float, default=1.0,
                        help="count assumed for unseen tokens")
    parser.add_argument("--gazetteer", help="gazetteer file (detector role)")
    parser.add_argument("--stopwords", help="stopword file (detector role)")
    args = parser.parse_args(argv)

    scorer = detector = None
    if args.role == "scorer":
        if not args.vocab:
            parser.error("--vocab is required for the scorer role")
        with open(args.vocab, encoding="utf-8") as handle:
            counts = json.load(handle)
        scorer = UnigramScorer(counts, floor_count=args.floor)
    else:
        given, family = load_gazetteer(args.gazetteer)
        stopwords = load_wordlist(args.stopwords)
        detector = GazetteerDetector(given, family, stopwords)
    serve(scorer, detector)
    return 0


if __name__ == "__main__":
    sys.exit(main())
