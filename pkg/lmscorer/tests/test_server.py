import math

import pytest
import torch

from conftest import serve_command
from lmscorer.model import ScoringModel

from namecloze import wire
from namecloze.scorer import ScoreQuery


class TestProtocol:
    def test_handshake(self, untrained_checkpoint):
        with wire.ExternalScorer(serve_command(untrained_checkpoint)):
            pass  # constructing the client performs the handshake

    def test_conformance_suite(self, untrained_checkpoint):
        report = wire.run_scorer_conformance(serve_command(untrained_checkpoint))
        assert report.passed, report.summary()

    def test_two_candidate_fixture_scores_finite(self, untrained_checkpoint):
        text = ("Gina arrives and she is furious with Denise for not protecting "
                "Jody from Kingsley, as [MASK] was meant to be the parent.")
        with wire.ExternalScorer(serve_command(untrained_checkpoint)) as scorer:
            scores = scorer.score(ScoreQuery("fig", text, ("Gina", "Denise")))
        assert len(scores.logprobs) == 2
        assert all(math.isfinite(v) for v in scores.logprobs)

    def test_candidate_order_preserved(self, untrained_checkpoint):
        text = "Alice thanked Bob because [MASK] helped."
        with wire.ExternalScorer(serve_command(untrained_checkpoint)) as scorer:
            forward = scorer.score(ScoreQuery("a", text, ("Alice", "Bob", "Carol")))
            backward = scorer.score(ScoreQuery("b", text, ("Carol", "Bob", "Alice")))
        assert forward.logprobs == tuple(reversed(backward.logprobs))

    def test_malformed_request_keeps_serving(self, untrained_checkpoint):
        with wire.ExternalScorer(serve_command(untrained_checkpoint)) as scorer:
            reply = scorer.client.request({"kind": "score", "query_id": "x"})
            assert reply["kind"] == "error"
            ok = scorer.score(ScoreQuery("y", "so [MASK] left.", ("Alice",)))
            assert len(ok.logprobs) == 1

    def test_matches_inprocess_scores(self, untrained_checkpoint):
        model = ScoringModel.load(untrained_checkpoint)
        text = "Karen greeted Leo before [MASK] spoke."
        with wire.ExternalScorer(serve_command(untrained_checkpoint)) as scorer:
            remote = scorer.score(ScoreQuery("q", text, ("Karen", "Leo")))
        local = [model.score_candidate(text, c) for c in ("Karen", "Leo")]
        assert list(remote.logprobs) == pytest.approx(local, abs=1e-5)


class TestEvaluationLoop:
    def test_primary_evaluate_over_served_model(self, untrained_checkpoint):
        import pathlib

        fixture = (pathlib.Path(__file__).parents[2]
                   / "tests" / "data" / "wsc_fixture.xml")
        if not fixture.exists():
            pytest.skip("evaluation fixtures not checked out alongside")
        from namecloze import datasets, metrics

        items = datasets.load_dataset("wsc273", fixture)
        runs = []
        for _ in range(2):
            with wire.ExternalScorer(serve_command(untrained_checkpoint)) as scorer:
                runs.append(metrics.evaluate(items, scorer))
        assert runs[0] == runs[1]
        assert 0.0 <= runs[0].accuracy <= 1.0
        assert runs[0].n_failures == 0


class TestAveragingContract:
    def test_single_token_identity(self, untrained_checkpoint):
        model = ScoringModel.load(untrained_checkpoint)
        text = "Later [MASK] praised Paula again."
        with torch.no_grad():
            per_token = model.candidate_token_logprobs(text, "Karen")
        assert per_token.numel() == 1
        assert model.score_candidate(text, "Karen") == pytest.approx(float(per_token[0]))

    def test_multi_token_mean(self, untrained_checkpoint):
        model = ScoringModel.load(untrained_checkpoint)
        text = "Later [MASK] praised Paula again."
        with torch.no_grad():
            per_token = model.candidate_token_logprobs(text, "Karen Smith")
        assert per_token.numel() == 2
        assert model.score_candidate(text, "Karen Smith") == \
            pytest.approx(float(per_token.mean()))

    def test_mask_expansion_uses_one_slot_per_token(self, untrained_checkpoint):
        model = ScoringModel.load(untrained_checkpoint)
        ids1, pos1 = model._inputs("a [MASK] b.", 1)
        ids3, pos3 = model._inputs("a [MASK] b.", 3)
        assert len(pos1) == 1 and len(pos3) == 3
        assert len(ids3) == len(ids1) + 2

    def test_unknown_tokens_still_finite(self, untrained_checkpoint):
        model = ScoringModel.load(untrained_checkpoint)
        score = model.score_candidate("so [MASK] left.", "Zyzzyva Qwx")
        assert math.isfinite(score)
