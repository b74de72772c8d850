"""Wire-protocol server exposing a checkpoint as an external scorer.

Speaks line-delimited JSON on stdin/stdout: hello handshake, "score"
requests answered with one mean log-probability per candidate, and the
"score_tokens" debug kind exposing per-token log-probabilities so
clients can verify the averaging identity.  Malformed requests produce
an error message and leave the connection alive.
"""
from __future__ import annotations

import json
import sys

import torch

from .model import MASK_LITERAL, ScoringModel

PROTOCOL_VERSION = 1


def _reply(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, ensure_ascii=False) + "\n")
    sys.stdout.flush()


def _error(query_id, message: str) -> None:
    _reply({"kind": "error", "query_id": query_id, "message": message})


def serve(model: ScoringModel, stdin=None) -> None:
    model.net.eval()
    stdin = stdin or sys.stdin
    with torch.no_grad():
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            try:
                message = json.loads(line)
            except json.JSONDecodeError as exc:
                _error(None, f"bad JSON: {exc}")
                continue
            if not isinstance(message, dict) or "kind" not in message:
                _error(None, "message must be an object with a 'kind'")
                continue
            query_id = message.get("query_id")
            kind = message["kind"]
            try:
                if kind == "hello":
                    _reply({"kind": "hello", "protocol": PROTOCOL_VERSION})
                elif kind == "score":
                    mask = message.get("mask_token", MASK_LITERAL)
                    candidates = message["candidates"]
                    if not isinstance(candidates, list) or not candidates:
                        raise ValueError("candidates must be a nonempty list")
                    logprobs = [
                        model.score_candidate(message["masked_text"], cand, mask)
                        for cand in candidates
                    ]
                    _reply({"kind": "scores", "query_id": query_id,
                            "logprobs": logprobs})
                elif kind == "score_tokens":
                    mask = message.get("mask_token", MASK_LITERAL)
                    per_token = model.candidate_token_logprobs(
                        message["masked_text"], message["candidate"], mask)
                    _reply({"kind": "token_scores", "query_id": query_id,
                            "logprobs": [float(v) for v in per_token]})
                else:
                    _error(query_id, f"unknown message kind {kind!r}")
            except (KeyError, TypeError, ValueError) as exc:
                _error(query_id, f"bad {kind} request: {exc}")
