import sys
from pathlib import Path

import pytest

from lmscorer import training
from lmscorer.model import ModelConfig, ScoringModel, Vocabulary

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def train_records():
    return training.load_records(DATA / "train_records.jsonl")


@pytest.fixture(scope="session")
def val_records():
    return training.load_records(DATA / "val_records.jsonl")


@pytest.fixture(scope="session")
def untrained_checkpoint(tmp_path_factory, train_records) -> Path:
    """A freshly initialized (untrained) model saved to disk."""
    texts = [r.masked_text for r in train_records]
    texts += [r.correct for r in train_records] + [r.incorrect for r in train_records]
    model = ScoringModel(Vocabulary.build(texts), ModelConfig(), seed=7)
    path = tmp_path_factory.mktemp("ckpt") / "fresh.pt"
    model.save(path)
    return path


def serve_command(checkpoint: Path) -> str:
    return f"{sys.executable} -m lmscorer serve --checkpoint {checkpoint}"
