"""Client side of the external scorer/detector wire protocol.

Messages are UTF-8 JSON objects, one per line, over the child process's
standard input and output.  A connection opens with a hello handshake and
carries one request at a time; detectors reuse the same framing with a
different message kind.

    client: {"kind": "hello", "protocol": 1, "role": "scorer"}
    server: {"kind": "hello", "protocol": 1}
    client: {"kind": "score", "query_id": "q1", "masked_text": "...",
             "mask_token": "[MASK]", "candidates": ["Ada", "Grace"]}
    server: {"kind": "scores", "query_id": "q1", "logprobs": [-1.2, -3.4]}

Other kinds: "score_tokens"/"token_scores" (per-token log-probabilities of
one candidate, used by the conformance suite), "detect"/"mentions"
(character spans of personal names), and "error".
"""
from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Sequence

from .common import MASK_TOKEN, PROTOCOL_VERSION, DetectorError, ProtocolError, TransportError
from .names import NameMention
from .scorer import CandidateScores, ScoreQuery
from .textio import Passage


class WireClient:
    """One connection to a line-delimited JSON child process."""

    def __init__(self, command: str | Sequence[str], role: str):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.role = role
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot spawn {argv[0]!r}: {exc}") from exc
        self._lock = threading.Lock()
        self._handshake()

    def _handshake(self) -> None:
        reply = self.request({"kind": "hello", "protocol": PROTOCOL_VERSION, "role": self.role})
        if reply.get("kind") != "hello" or reply.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError(f"bad handshake reply: {reply}")

    def request(self, message: dict) -> dict:
        with self._lock:
            self._send(message)
            return self._recv()

    def _send(self, message: dict) -> None:
        if self._proc.stdin is None or self._proc.poll() is not None:
            raise TransportError("the external process has exited")
        try:
            self._proc.stdin.write(json.dumps(message, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"failed to write to the external process: {exc}") from exc

    def _recv(self) -> dict:
        line = self._proc.stdout.readline()
        if not line:
            raise TransportError("the external process closed its output")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"response is not valid JSON: {line!r}") from exc
        if not isinstance(message, dict):
            raise ProtocolError(f"response is not an object: {message!r}")
        return message

    def close(self) -> None:
        proc = self._proc
        if proc.stdin is not None:
            try:
                proc.stdin.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _expect(message: dict, kind: str, query_id: str) -> dict:
    if message.get("kind") == "error":
        raise ProtocolError(f"external process error: {message.get('message')}")
    if message.get("kind") != kind:
        raise ProtocolError(f"expected {kind!r}, got {message.get('kind')!r}")
    if message.get("query_id") != query_id:
        raise ProtocolError(
            f"response for query {message.get('query_id')!r}, expected {query_id!r}")
    return message


class ExternalScorer:
    """Scorer handle backed by an external process."""

    def __init__(self, command: str | Sequence[str]):
        self.client = WireClient(command, role="scorer")

    def score(self, query: ScoreQuery) -> CandidateScores:
        reply = self.client.request({
            "kind": "score",
            "query_id": query.query_id,
            "masked_text": query.masked_text,
            "mask_token": MASK_TOKEN,
            "candidates": list(query.candidates),
        })
        _expect(reply, "scores", query.query_id)
        logprobs = reply.get("logprobs")
        if not isinstance(logprobs, list) or not all(isinstance(v, (int, float)) for v in logprobs):
            raise ProtocolError(f"bad logprobs payload: {logprobs!r}")
        return CandidateScores(query.query_id, tuple(float(v) for v in logprobs))

    def score_tokens(self, masked_text: str, candidate: str, query_id: str = "t0") -> list[float]:
        reply = self.client.request({
            "kind": "score_tokens",
            "query_id": query_id,
            "masked_text": masked_text,
            "mask_token": MASK_TOKEN,
            "candidate": candidate,
        })
        _expect(reply, "token_scores", query_id)
        logprobs = reply.get("logprobs")
        if not isinstance(logprobs, list) or not logprobs:
            raise ProtocolError(f"bad token_scores payload: {logprobs!r}")
        return [float(v) for v in logprobs]

    def close(self) -> None:
        self.client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ExternalDetector:
    """Name detector backed by an external process."""

    def __init__(self, command: str | Sequence[str]):
        self.client = WireClient(command, role="detector")
        self._counter = 0

    def _spans(self, text: str) -> list[tuple[int, int]]:
        self._counter += 1
        query_id = f"d{self._counter}"
        try:
            reply = self.client.request({"kind": "detect", "query_id": query_id, "text": text})
            _expect(reply, "mentions", query_id)
        except ProtocolError as exc:
            raise DetectorError(str(exc)) from exc
        mentions = reply.get("mentions")
        if not isinstance(mentions, list):
            raise DetectorError(f"bad mentions payload: {mentions!r}")
        spans = []
        for pair in mentions:
            if (not isinstance(pair, (list, tuple)) or len(pair) != 2
                    or not all(isinstance(v, int) for v in pair)):
                raise DetectorError(f"bad mention span: {pair!r}")
            spans.append((pair[0], pair[1]))
        return spans

    def detect(self, passage: Passage) -> list[NameMention]:
        out = []
        for start, end in self._spans(passage.text):
            if not (0 <= start < end <= len(passage.text)):
                raise DetectorError(f"mention span out of range: ({start}, {end})")
            out.append(NameMention(start, end, passage.text[start:end],
                                   passage.sentence_index_at(start)))
        return sorted(out, key=lambda m: m.start)

    def detect_text(self, text: str, regions=None) -> list[tuple[int, int, int]]:
        return [(0, start, end) for start, end in sorted(self._spans(text))]

    def close(self) -> None:
        self.client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ScorerPool:
    """A fixed pool of external scorer processes, one request in flight each."""

    def __init__(self, command: str | Sequence[str], size: int = 1):
        if size < 1:
            raise ValueError("pool size must be at least 1")
        self._scorers = [ExternalScorer(command) for _ in range(size)]
        self._free: list[ExternalScorer] = list(self._scorers)
        self._cond = threading.Condition()

    def score(self, query: ScoreQuery) -> CandidateScores:
        with self._cond:
            while not self._free:
                self._cond.wait()
            scorer = self._free.pop()
        try:
            return scorer.score(query)
        finally:
            with self._cond:
                self._free.append(scorer)
                self._cond.notify()

    def close(self) -> None:
        for s in self._scorers:
            s.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# --- conformance -------------------------------------------------------------


@dataclass(frozen=True)
class ConformanceCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ConformanceReport:
    checks: tuple[ConformanceCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [f"[{'PASS' if c.passed else 'FAIL'}] {c.name}"
                 + (f": {c.detail}" if c.detail else "")
                 for c in self.checks]
        return "\n".join(lines)


_CONFORMANCE_TEXT = f"Ada told Grace that {MASK_TOKEN} wrote the first program."
_CONFORMANCE_CANDIDATES = ("Ada", "Grace", "Ada Lovelace")


def run_scorer_conformance(command: str | Sequence[str]) -> ConformanceReport:
    """Exercise an external scorer against the protocol contract.

    Checks the handshake, response arity and order, score finiteness, the
    per-token averaging identity (a candidate's score must equal the mean
    of its per-token log-probabilities, trivially so for single tokens),
    and that a malformed request produces an error without killing the
    connection.
    """
    checks: list[ConformanceCheck] = []

    def record(name: str, passed: bool, detail: str = "") -> None:
        checks.append(ConformanceCheck(name, passed, detail))

    try:
        scorer = ExternalScorer(command)
    except (ProtocolError, TransportError) as exc:
        record("handshake", False, str(exc))
        return ConformanceReport(tuple(checks))
    record("handshake", True)

    with scorer:
        try:
            query = ScoreQuery("c1", _CONFORMANCE_TEXT, _CONFORMANCE_CANDIDATES)
            scores = scorer.score(query)
            record("arity", len(scores.logprobs) == len(_CONFORMANCE_CANDIDATES),
                   f"{len(scores.logprobs)} scores")
            finite = all(math.isfinite(v) for v in scores.logprobs)
            record("finiteness", finite, f"logprobs={list(scores.logprobs)}")

            reversed_query = ScoreQuery("c2", _CONFORMANCE_TEXT, _CONFORMANCE_CANDIDATES[::-1])
            rev = scorer.score(reversed_query)
            in_order = all(
                math.isclose(a, b, rel_tol=0, abs_tol=1e-9)
                for a, b in zip(scores.logprobs, rev.logprobs[::-1])
            )
            record("order", in_order, "scores follow candidate order")

            ok = True
            detail = ""
            for qid, candidate in (("c3", "Ada"), ("c4", "Ada Lovelace")):
                tokens = scorer.score_tokens(_CONFORMANCE_TEXT, candidate, query_id=qid)
                single = scorer.score(ScoreQuery(qid + "s", _CONFORMANCE_TEXT, (candidate,)))
                mean = sum(tokens) / len(tokens)
                if candidate == "Ada" and len(tokens) != 1:
                    ok, detail = False, f"single-token candidate returned {len(tokens)} tokens"
                    break
                if not math.isclose(mean, single.logprobs[0], rel_tol=1e-9, abs_tol=1e-6):
                    ok, detail = False, f"mean {mean} != score {single.logprobs[0]} for {candidate!r}"
                    break
            record("token_averaging", ok, detail)

            reply = scorer.client.request({"kind": "score", "query_id": "c5"})
            record("malformed_request", reply.get("kind") == "error",
                   f"reply kind {reply.get('kind')!r}")
            again = scorer.score(ScoreQuery("c6", _CONFORMANCE_TEXT, ("Ada",)))
            record("connection_alive", len(again.logprobs) == 1)
        except (ProtocolError, TransportError) as exc:
            record("protocol", False, str(exc))
    return ConformanceReport(tuple(checks))
