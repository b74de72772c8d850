"""Fine-tuning on mined record files with the pairwise ranking loss.

Each record carries a masked text, the correct candidate, and one
incorrect candidate.  The optimized objective per pair is

    -logp_a + alpha * max(0, logp_b - logp_a + beta)

with the log-probabilities computed under the joint mask-filling contract.
Validation runs after every epoch and the best checkpoint is retained.
"""
from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

import torch

from .model import ModelConfig, ScoringModel, Vocabulary

# grid used for hyperparameter search; the shipped training defaults are
# the selected cell (lr 1e-5, alpha 10, beta 0.2)
DEFAULT_LR_GRID = (3e-5, 1e-5, 5e-6, 3e-6)
DEFAULT_ALPHA_GRID = (5.0, 10.0, 20.0)
DEFAULT_BETA_GRID = (0.1, 0.2, 0.4)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    alpha: float = 10.0
    beta: float = 0.2
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    validation_path: str | None = None
    checkpoint_dir: str | None = None
    lr_grid: tuple = DEFAULT_LR_GRID
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    beta_grid: tuple = DEFAULT_BETA_GRID

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise ValueError("learning rate and batch size must be positive")


@dataclass
class Record:
    masked_text: str
    correct: str
    incorrect: str


def load_records(path: str | Path) -> list[Record]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                records.append(Record(data["masked_text"], data["correct"],
                                      data["incorrect"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record: {exc}") from exc
    return records


def pair_loss(logp_a: torch.Tensor, logp_b: torch.Tensor,
              alpha: float, beta: float) -> torch.Tensor:
    """The pairwise objective; differentiable in both log-probabilities."""
    margin = torch.clamp(logp_b - logp_a + beta, min=0.0)
    return -logp_a + alpha * margin


@dataclass
class EpochStats:
    epoch: int
    mean_train_loss: float
    validation_accuracy: float | None


@dataclass
class TrainResult:
    model: ScoringModel
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int | None = None
    checkpoint_path: str | None = None


def _validation_accuracy(model: ScoringModel, records: list[Record]) -> float:
    model.net.eval()
    correct = 0
    with torch.no_grad():
        for rec in records:
            logp_a, logp_b = model.pair_logprobs(rec.masked_text, rec.correct,
                                                 rec.incorrect)
            # ties select the first (correct) candidate
            correct += bool(logp_a >= logp_b)
    return correct / len(records) if records else 0.0


def train(records: list[Record], config: TrainConfig,
          model: ScoringModel | None = None,
          validation: list[Record] | None = None) -> TrainResult:
    torch.manual_seed(config.seed)
    if model is None:
        texts = itertools.chain.from_iterable(
            (r.masked_text, r.correct, r.incorrect) for r in records)
        model = ScoringModel(Vocabulary.build(texts), ModelConfig(), seed=config.seed)
    if validation is None and config.validation_path:
        validation = load_records(config.validation_path)

    optimizer = torch.optim.Adam(model.net.parameters(), lr=config.learning_rate)
    rng = random.Random(config.seed)
    result = TrainResult(model=model)
    best_accuracy = None
    checkpoint_dir = Path(config.checkpoint_dir) if config.checkpoint_dir else None
    if checkpoint_dir:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    order = list(range(len(records)))
    for epoch in range(1, config.epochs + 1):
        model.net.train()
        rng.shuffle(order)
        total = 0.0
        seen = 0
        for start in range(0, len(order), config.batch_size):
            batch = [records[i] for i in order[start:start + config.batch_size]]
            optimizer.zero_grad()
            losses = []
            for rec in batch:
                logp_a, logp_b = model.pair_logprobs(rec.masked_text, rec.correct,
                                                     rec.incorrect)
                losses.append(pair_loss(logp_a, logp_b, config.alpha, config.beta))
            loss = torch.stack(losses).mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch} "
                    f"(lr={config.learning_rate}, alpha={config.alpha})")
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(batch)
            seen += len(batch)
        mean_loss = total / max(seen, 1)
        accuracy = _validation_accuracy(model, validation) if validation else None
        result.epochs.append(EpochStats(epoch, mean_loss, accuracy))
        improved = (best_accuracy is None or
                    (accuracy is not None and accuracy > best_accuracy))
        if validation is None:
            improved = True  # keep the latest when nothing validates
        if improved:
            best_accuracy = accuracy
            result.best_epoch = epoch
            if checkpoint_dir:
                path = checkpoint_dir / "best.pt"
                model.save(path)
                result.checkpoint_path = str(path)
        if checkpoint_dir:
            log = checkpoint_dir / "epochs.jsonl"
            with open(log, "a", encoding="utf-8") as handle:
                handle.write(json.dumps({
                    "epoch": epoch,
                    "mean_train_loss": mean_loss,
                    "validation_accuracy": accuracy,
                }) + "\n")
    if checkpoint_dir and result.checkpoint_path is None:
        path = checkpoint_dir / "best.pt"
        model.save(path)
        result.checkpoint_path = str(path)
    model.net.eval()
    return result


@dataclass
class GridCell:
    learning_rate: float
    alpha: float
    beta: float
    validation_accuracy: float


def grid_search(records: list[Record], validation: list[Record],
                config: TrainConfig, subset: int | None = None,
                ) -> tuple[GridCell, list[GridCell]]:
    """Train one run per (lr, alpha, beta) cell; best validation accuracy
    wins, ties going to the first cell in grid order."""
    if not (config.lr_grid and config.alpha_grid and config.beta_grid):
        raise ValueError("the search grid must be nonempty")
    pool = records[:subset] if subset else records
    cells: list[GridCell] = []
    best: GridCell | None = None
    for lr, alpha, beta in itertools.product(config.lr_grid, config.alpha_grid,
                                             config.beta_grid):
        cell_config = replace(config, learning_rate=lr, alpha=alpha, beta=beta,
                              checkpoint_dir=None)
        try:
            run = train(pool, cell_config, validation=validation)
            accuracy = run.epochs[-1].validation_accuracy or 0.0
        except TrainingDiverged:
            accuracy = 0.0
        cell = GridCell(lr, alpha, beta, accuracy)
        cells.append(cell)
        if best is None or cell.validation_accuracy > best.validation_accuracy:
            best = cell
    return best, cells
