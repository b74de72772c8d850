import json
import sys

import pytest

from namecloze import mining
from namecloze.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestMine:
    def test_fixture_corpus(self, capsys, data_dir, tmp_path):
        out = tmp_path / "mined.jsonl"
        code, stdout, _ = run_cli(capsys, "mine", "--input", str(data_dir / "corpus"),
                                  "--output", str(out), "--deterministic")
        assert code == 0
        summary = json.loads(stdout.splitlines()[0])
        assert summary["documents"] == 10
        assert summary["examples"] == len(list(mining.read_records(out)))
        assert summary["mask_token_collision"] == 1

    def test_empty_corpus(self, capsys, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        out = tmp_path / "mined.jsonl"
        code, stdout, _ = run_cli(capsys, "mine", "--input", str(corpus),
                                  "--output", str(out))
        assert code == 0
        summary = json.loads(stdout.splitlines()[0])
        assert summary["documents"] == 0 and summary["examples"] == 0
        assert out.read_text("utf-8") == ""

    def test_worker_counts_byte_identical(self, capsys, data_dir, tmp_path):
        outputs = []
        for workers in ("1", "8"):
            out = tmp_path / f"mined-{workers}.jsonl"
            code, _, _ = run_cli(capsys, "mine", "--input", str(data_dir / "corpus"),
                                 "--output", str(out), "--workers", workers,
                                 "--deterministic")
            assert code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_dump_mining_counts_malformed_pages(self, capsys, data_dir, tmp_path):
        out = tmp_path / "dump_mined.jsonl"
        code, stdout, err = run_cli(capsys, "mine",
                                    "--input", str(data_dir / "mini_dump.xml"),
                                    "--output", str(out))
        assert code == 0
        summary = json.loads(stdout.splitlines()[0])
        assert summary["documents"] == 3
        assert summary["source_warnings"] == 1
        assert "Broken page" in err

    def test_missing_input_is_input_error(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "mine", "--input", str(tmp_path / "nope"),
                               "--output", str(tmp_path / "o.jsonl"))
        assert code == 2
        assert "input error" in err

    def test_detector_errors_skip_passage_and_count(self, monkeypatch, detector):
        from namecloze import cli, textio
        from namecloze.common import DetectorError

        class Flaky:
            def detect(self, passage):
                if passage.boundary is not None:
                    raise DetectorError("no pair passages today")
                return detector.detect(passage)

        monkeypatch.setattr(cli, "_WORKER_DETECTOR", Flaky())
        doc = textio.Document("d", "Alice met Bob at noon. Later Alice left.",
                              "plain-text")
        examples, counters = cli._mine_document(doc)
        assert counters["detector_errors"] == 1
        assert counters["passages"] == 2  # the two single-sentence windows
        assert examples == []  # the eligible pair was skipped


class TestSplit:
    @pytest.fixture()
    def mined(self, capsys, data_dir, tmp_path):
        out = tmp_path / "mined.jsonl"
        run_cli(capsys, "mine", "--input", str(data_dir / "corpus"),
                "--output", str(out))
        return out

    def test_split_counts(self, capsys, mined, tmp_path):
        code, stdout, _ = run_cli(
            capsys, "split", "--input", str(mined),
            "--train-output", str(tmp_path / "train.jsonl"),
            "--validation-output", str(tmp_path / "val.jsonl"),
            "--holdout-n", "3", "--seed", "7")
        assert code == 0
        total = len(list(mining.read_records(mined)))
        train = list(mining.read_records(tmp_path / "train.jsonl"))
        val = list(mining.read_records(tmp_path / "val.jsonl"))
        assert len(val) == 3
        assert len(train) == total - 3

    def test_fixed_seed_reproduces_files(self, capsys, mined, tmp_path):
        blobs = []
        for run in ("a", "b"):
            t, v = tmp_path / f"t{run}.jsonl", tmp_path / f"v{run}.jsonl"
            code, _, _ = run_cli(capsys, "split", "--input", str(mined),
                                 "--train-output", str(t), "--validation-output", str(v),
                                 "--holdout-n", "4", "--seed", "13")
            assert code == 0
            blobs.append((t.read_bytes(), v.read_bytes()))
        assert blobs[0] == blobs[1]

    def test_n_zero_and_n_size(self, capsys, mined, tmp_path):
        total = len(list(mining.read_records(mined)))
        code, _, _ = run_cli(capsys, "split", "--input", str(mined),
                             "--train-output", str(tmp_path / "t.jsonl"),
                             "--validation-output", str(tmp_path / "v.jsonl"),
                             "--holdout-n", "0", "--seed", "1")
        assert code == 0
        assert (tmp_path / "v.jsonl").read_text("utf-8") == ""
        code, _, _ = run_cli(capsys, "split", "--input", str(mined),
                             "--train-output", str(tmp_path / "t2.jsonl"),
                             "--validation-output", str(tmp_path / "v2.jsonl"),
                             "--holdout-n", str(total), "--seed", "1")
        assert code == 0
        assert (tmp_path / "t2.jsonl").read_text("utf-8") == ""

    def test_oversized_holdout_is_input_error(self, capsys, mined, tmp_path):
        code, _, err = run_cli(capsys, "split", "--input", str(mined),
                               "--train-output", str(tmp_path / "t.jsonl"),
                               "--validation-output", str(tmp_path / "v.jsonl"),
                               "--holdout-n", "100000", "--seed", "1")
        assert code == 2


class TestStats:
    def test_annotation_fixture_numbers(self, capsys):
        code, stdout, _ = run_cli(capsys, "stats", "--annotations", "builtin")
        assert code == 0
        record = json.loads(stdout.splitlines()[0])
        assert record["total"] == 100
        assert record["unsolvable"] == 18
        assert abs(record["annotator_accuracy"] - 0.951) < 1e-3
        assert record["natural_fraction"] == pytest.approx(0.63)

    def test_balanced_synthetic_ratio(self, capsys, tmp_path, detector):
        from namecloze import textio
        from namecloze.names import detect_names

        texts = ["Gina met Bob before Gina left.", "Victor saw Alice and Victor waved."]
        examples = []
        for i, text in enumerate(texts):
            doc = textio.Document(f"d{i}", text, "plain-text")
            pairs = [(p, detect_names(p, detector)) for p in textio.windows(doc)]
            examples.extend(mining.mine_document_passages(pairs))
        data = tmp_path / "ds.jsonl"
        mining.write_records(data, examples)
        code, stdout, _ = run_cli(capsys, "stats", "--input", str(data))
        record = json.loads(stdout.splitlines()[0])
        assert code == 0
        assert record["female_male_ratio"] == pytest.approx(1.0)

    def test_no_classifiable_names(self, capsys, tmp_path):
        data = tmp_path / "ds.jsonl"
        ex = mining.MaskedExample("x", "[MASK] met Qq.", "Qq", "Zz", "d", 0, 0, 10)
        mining.write_records(data, [ex])
        code, stdout, _ = run_cli(capsys, "stats", "--input", str(data))
        record = json.loads(stdout.splitlines()[0])
        assert record["female_male_ratio"] is None

    def test_usage_error_without_inputs(self, capsys):
        code, _, err = run_cli(capsys, "stats")
        assert code == 1


class TestEval:
    def test_wsc_reference_scorer(self, capsys, data_dir):
        code, stdout, _ = run_cli(
            capsys, "eval", "--input", str(data_dir / "wsc_fixture.xml"),
            "--dataset-kind", "wsc273",
            "--scorer", f"reference:{data_dir / 'unigram_vocab.json'}")
        assert code == 0
        record = json.loads(stdout.splitlines()[0])
        assert record["n_items"] == 20
        assert record["accuracy"] == 0.5

    def test_gap_eval_with_builtin_detector(self, capsys, data_dir):
        code, stdout, _ = run_cli(
            capsys, "eval", "--input", str(data_dir / "gap_mini.tsv"),
            "--dataset-kind", "gap", "--split", "test",
            "--scorer", f"reference:{data_dir / 'unigram_vocab.json'}")
        assert code == 0
        record = json.loads(stdout.splitlines()[0])
        assert record["kind"] == "labeled"
        assert 0.0 <= record["f1_overall"] <= 1.0
        assert record["f1_cap"] is not None

    def test_external_scorer_roundtrip(self, capsys, data_dir):
        cmd = (f"{sys.executable} -m namecloze.refserver --role scorer "
               f"--vocab {data_dir / 'unigram_vocab.json'}")
        code, stdout, _ = run_cli(
            capsys, "eval", "--input", str(data_dir / "wsc_fixture.xml"),
            "--dataset-kind", "wsc273", "--scorer", f"external:{cmd}",
            "--workers", "3", "--run-label", "reference-over-wire")
        assert code == 0
        record = json.loads(stdout.splitlines()[0])
        assert record["accuracy"] == 0.5
        assert record["scorer"] == "reference-over-wire"

    def test_scorer_spawn_failure_exit_code(self, capsys, data_dir):
        code, _, err = run_cli(
            capsys, "eval", "--input", str(data_dir / "wsc_fixture.xml"),
            "--dataset-kind", "wsc273", "--scorer", "external:/missing/prog")
        assert code == 3
        assert "protocol error" in err

    def test_config_file_defaults_overridden_by_flags(self, capsys, data_dir, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text("alpha = 5\nbeta = 0.4\n", "utf-8")
        code, stdout, _ = run_cli(
            capsys, "eval", "--input", str(data_dir / "wsc_fixture.xml"),
            "--dataset-kind", "wsc273",
            "--scorer", f"reference:{data_dir / 'unigram_vocab.json'}",
            "--config", str(config), "--beta", "0.2")
        assert code == 0

    def test_config_file_can_supply_required_settings(self, capsys, data_dir, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text(
            "# an experiment definition\n"
            f"input = {data_dir / 'wsc_fixture.xml'}\n"
            "dataset-kind = wsc273\n"
            f"scorer = reference:{data_dir / 'unigram_vocab.json'}\n", "utf-8")
        code, stdout, _ = run_cli(capsys, "eval", "--config", str(config))
        assert code == 0
        assert json.loads(stdout.splitlines()[0])["accuracy"] == 0.5

    def test_missing_required_setting_is_usage_error(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "eval", "--dataset-kind", "wsc273")
        assert code == 1
        assert "required" in err


class TestConformanceCommand:
    def test_pass(self, capsys, refserver_cmd):
        code, stdout, _ = run_cli(capsys, "conformance", "--scorer", refserver_cmd)
        assert code == 0
        assert "[PASS] handshake" in stdout

    def test_usage_errors(self, capsys):
        code, _, err = run_cli(capsys)
        assert code == 1
        code, _, err = run_cli(capsys, "eval", "--input", "x")
        assert code == 1
