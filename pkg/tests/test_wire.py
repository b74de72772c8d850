import json
import sys
import textwrap

import pytest

from namecloze import wire
from namecloze.common import MASK_TOKEN, DetectorError, TransportError
from namecloze.scorer import ScoreQuery
from namecloze.textio import Document, windows


@pytest.fixture(scope="module")
def scorer_proc(refserver_cmd):
    with wire.ExternalScorer(refserver_cmd) as scorer:
        yield scorer


class TestExternalScorer:
    def test_scores_match_inprocess_reference(self, scorer_proc, vocab_counts):
        from namecloze.scorer import UnigramScorer

        query = ScoreQuery("q1", f"the {MASK_TOKEN} was heavy", ("the trophy", "the suitcase"))
        remote = scorer_proc.score(query)
        local = UnigramScorer(vocab_counts).score(query)
        assert remote.logprobs == pytest.approx(local.logprobs)

    def test_token_scores(self, scorer_proc):
        tokens = scorer_proc.score_tokens(f"a {MASK_TOKEN} b", "the trophy")
        assert len(tokens) == 2

    def test_conformance_suite_passes(self, refserver_cmd):
        report = wire.run_scorer_conformance(refserver_cmd)
        assert report.passed, report.summary()
        names = [c.name for c in report.checks]
        assert {"handshake", "arity", "order", "finiteness",
                "token_averaging"} <= set(names)

    def test_spawn_failure_is_transport_error(self):
        with pytest.raises(TransportError):
            wire.ExternalScorer("/nonexistent/binary-xyz")

    def test_dead_process_is_transport_error(self, refserver_cmd):
        scorer = wire.ExternalScorer(refserver_cmd)
        scorer.close()
        with pytest.raises(TransportError):
            scorer.score(ScoreQuery("q", f"{MASK_TOKEN} x", ("a",)))


def _script(tmp_path, body: str) -> str:
    path = tmp_path / "server.py"
    path.write_text(textwrap.dedent(body), "utf-8")
    return f"{sys.executable} {path}"


class TestMisbehavingServers:
    def test_wrong_arity_detected_by_conformance(self, tmp_path):
        cmd = _script(tmp_path, """
            import json, sys
            for line in sys.stdin:
                msg = json.loads(line)
                if msg["kind"] == "hello":
                    print(json.dumps({"kind": "hello", "protocol": 1}), flush=True)
                elif msg["kind"] == "score":
                    print(json.dumps({"kind": "scores", "query_id": msg["query_id"],
                                      "logprobs": [-1.0]}), flush=True)
                else:
                    print(json.dumps({"kind": "error", "query_id": msg.get("query_id"),
                                      "message": "nope"}), flush=True)
        """)
        report = wire.run_scorer_conformance(cmd)
        assert not report.passed

    def test_bad_handshake(self, tmp_path):
        cmd = _script(tmp_path, """
            import json, sys
            for line in sys.stdin:
                print(json.dumps({"kind": "hello", "protocol": 99}), flush=True)
        """)
        report = wire.run_scorer_conformance(cmd)
        assert not report.passed
        assert report.checks[0].name == "handshake"

    def test_nonfinite_scores_flagged(self, tmp_path):
        cmd = _script(tmp_path, """
            import json, sys
            for line in sys.stdin:
                msg = json.loads(line)
                if msg["kind"] == "hello":
                    print(json.dumps({"kind": "hello", "protocol": 1}), flush=True)
                elif msg["kind"] == "score":
                    print(json.dumps({"kind": "scores", "query_id": msg["query_id"],
                                      "logprobs": [1e999] * len(msg["candidates"])}),
                          flush=True)
                else:
                    print(json.dumps({"kind": "token_scores",
                                      "query_id": msg.get("query_id"),
                                      "logprobs": [1e999]}), flush=True)
        """)
        report = wire.run_scorer_conformance(cmd)
        assert not report.passed
        failed = {c.name for c in report.checks if not c.passed}
        assert "finiteness" in failed


@pytest.fixture(scope="module")
def detector_cmd():
    return f"{sys.executable} -m namecloze.refserver --role detector"


class TestExternalDetector:

    def test_matches_builtin(self, detector_cmd, detector):
        text = "Alice met Bob at the station. Later Alice drove home."
        doc = Document("d", text, "plain-text")
        with wire.ExternalDetector(detector_cmd) as remote:
            for passage in windows(doc):
                got = remote.detect(passage)
                want = detector.detect(passage)
                assert [(m.start, m.end) for m in got] == \
                    [(m.start, m.end) for m in want]
                assert [m.sentence_index for m in got] == \
                    [m.sentence_index for m in want]

    def test_wrong_role_server_fails_detection(self, refserver_cmd):
        with wire.ExternalDetector(refserver_cmd) as remote:
            with pytest.raises(DetectorError):
                remote.detect_text("Alice met Bob.")


class TestScorerPool:
    def test_pool_matches_single(self, refserver_cmd, vocab_counts):
        queries = [ScoreQuery(f"q{i}", f"w {MASK_TOKEN} z", ("the trophy", "the suitcase", "Frank"))
                   for i in range(8)]
        with wire.ExternalScorer(refserver_cmd) as single:
            expected = [single.score(q).logprobs for q in queries]
        with wire.ScorerPool(refserver_cmd, size=3) as pool:
            got = [pool.score(q).logprobs for q in queries]
        assert got == expected

    def test_size_validated(self, refserver_cmd):
        with pytest.raises(ValueError):
            wire.ScorerPool(refserver_cmd, size=0)


class TestRefserverErrors:
    def test_malformed_request_keeps_connection(self, refserver_cmd):
        scorer = wire.ExternalScorer(refserver_cmd)
        reply = scorer.client.request({"kind": "score", "query_id": "x"})
        assert reply["kind"] == "error"
        out = scorer.score(ScoreQuery("y", f"{MASK_TOKEN} a", ("Frank",)))
        assert len(out.logprobs) == 1
        scorer.close()

    def test_bad_json_line(self, refserver_cmd):
        scorer = wire.ExternalScorer(refserver_cmd)
        scorer.client._send({"kind": "hello", "protocol": 1, "role": "scorer"})
        scorer.client._proc.stdin.write("this is not json\n")
        scorer.client._proc.stdin.flush()
        first = scorer.client._recv()
        second = scorer.client._recv()
        assert {first["kind"], second["kind"]} == {"hello", "error"}
        scorer.close()
