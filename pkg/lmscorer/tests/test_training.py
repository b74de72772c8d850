import json

import pytest

from lmscorer import training
from lmscorer.model import ScoringModel
from lmscorer.training import TrainConfig, TrainingDiverged


def smoke_config(tmp_path, **overrides):
    defaults = dict(learning_rate=1e-3, epochs=2, batch_size=16, seed=0,
                    checkpoint_dir=str(tmp_path / "ckpt"))
    defaults.update(overrides)
    return TrainConfig(**defaults)


class TestTrain:
    def test_smoke_two_epochs(self, train_records, val_records, tmp_path):
        result = training.train(train_records[:100], smoke_config(tmp_path),
                                validation=val_records)
        losses = [e.mean_train_loss for e in result.epochs]
        assert len(losses) == 2
        assert losses[1] <= losses[0]
        assert result.checkpoint_path is not None
        reloaded = ScoringModel.load(result.checkpoint_path)
        sample = val_records[0]
        assert reloaded.score_candidate(sample.masked_text, sample.correct) == \
            pytest.approx(reloaded.score_candidate(sample.masked_text, sample.correct))

    def test_epoch_log_written(self, train_records, val_records, tmp_path):
        config = smoke_config(tmp_path, epochs=1)
        training.train(train_records[:20], config, validation=val_records)
        log = tmp_path / "ckpt" / "epochs.jsonl"
        rows = [json.loads(line) for line in log.read_text("utf-8").splitlines()]
        assert rows[0]["epoch"] == 1
        assert rows[0]["validation_accuracy"] is not None

    def test_best_checkpoint_retained_by_validation(self, train_records,
                                                    val_records, tmp_path):
        result = training.train(train_records[:40], smoke_config(tmp_path, epochs=2),
                                validation=val_records)
        accuracies = [e.validation_accuracy for e in result.epochs]
        best = max(range(len(accuracies)), key=lambda i: (accuracies[i], -i)) + 1
        assert result.best_epoch == best

    def test_divergence_aborts_with_diagnostic(self, train_records, tmp_path):
        config = smoke_config(tmp_path, learning_rate=1e10, epochs=3)
        with pytest.raises(TrainingDiverged, match="non-finite"):
            training.train(train_records[:40], config)

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


class TestGridSearch:
    def test_single_cell_returned(self, train_records, val_records):
        config = TrainConfig(epochs=1, batch_size=16, seed=0,
                             lr_grid=(1e-3,), alpha_grid=(10.0,), beta_grid=(0.2,))
        best, cells = training.grid_search(train_records[:24], val_records, config)
        assert len(cells) == 1
        assert (best.learning_rate, best.alpha, best.beta) == (1e-3, 10.0, 0.2)

    def test_diverging_cell_loses(self, train_records, val_records):
        config = TrainConfig(epochs=1, batch_size=16, seed=0,
                             lr_grid=(1e10, 1e-3), alpha_grid=(10.0,),
                             beta_grid=(0.2,))
        best, cells = training.grid_search(train_records[:24], val_records, config)
        assert best.learning_rate == 1e-3
        diverged = next(c for c in cells if c.learning_rate == 1e10)
        assert diverged.validation_accuracy == 0.0

    def test_tie_goes_to_first_cell_in_grid_order(self, train_records, val_records):
        config = TrainConfig(epochs=1, batch_size=16, seed=0,
                             lr_grid=(1e10, 1e11), alpha_grid=(10.0,),
                             beta_grid=(0.2,))
        best, cells = training.grid_search(train_records[:16], val_records, config)
        assert [c.validation_accuracy for c in cells] == [0.0, 0.0]
        assert best.learning_rate == 1e10

    def test_subset_limits_training_pool(self, train_records, val_records):
        config = TrainConfig(epochs=1, batch_size=8, seed=0,
                             lr_grid=(1e-3,), alpha_grid=(10.0,), beta_grid=(0.2,))
        best, _ = training.grid_search(train_records, val_records, config, subset=8)
        assert 0.0 <= best.validation_accuracy <= 1.0

    def test_empty_grid_rejected(self, train_records, val_records):
        config = TrainConfig(lr_grid=())
        with pytest.raises(ValueError):
            training.grid_search(train_records[:8], val_records, config)

    def test_shipped_default_is_selected_cell(self):
        config = TrainConfig()
        assert config.learning_rate == 1e-5
        assert (config.alpha, config.beta) == (10.0, 0.2)
        assert config.learning_rate in config.lr_grid
        assert config.alpha in config.alpha_grid
        assert config.beta in config.beta_grid


class TestRecords:
    def test_loader_validates(self, tmp_path):
        bad = tmp_path / "r.jsonl"
        bad.write_text('{"masked_text": "x"}\n', "utf-8")
        with pytest.raises(ValueError, match="r.jsonl:1"):
            training.load_records(bad)

    def test_fixture_sizes(self, train_records, val_records):
        assert len(train_records) >= 100
        assert len(val_records) >= 10
        assert all("[MASK]" in r.masked_text for r in train_records)
