"""A small transformer masked language model with joint mask filling.

The scorer contract: to score a candidate for a text with one mask token,
the mask is replaced by as many model mask tokens as the candidate has
tokens, all positions are filled in a single forward pass, and the
candidate's score is the mean of its per-token log-probabilities.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import torch
from torch import nn

MASK_LITERAL = "[MASK]"
PAD, UNK, MASK = 0, 1, 2
SPECIALS = ("[PAD]", "[UNK]", "[MASK]")

_WORD_RE = re.compile(r"[\w'’\-]+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text)


@dataclass
class ModelConfig:
    vocab: list[str] = field(default_factory=list)
    dim: int = 64
    heads: int = 4
    layers: int = 2
    feedforward: int = 128
    max_len: int = 128


class Vocabulary:
    def __init__(self, tokens: list[str]):
        self.itos = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}

    @classmethod
    def build(cls, texts) -> "Vocabulary":
        seen = sorted({tok for text in texts for tok in tokenize(text)})
        return cls(seen)

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.stoi.get(tok, UNK) for tok in tokens]


class MaskedLM(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        if not config.vocab:
            raise ValueError("the model needs a non-empty vocabulary")
        self.config = config
        size = len(config.vocab)
        self.embed = nn.Embedding(size, config.dim, padding_idx=PAD)
        self.positions = nn.Embedding(config.max_len, config.dim)
        layer = nn.TransformerEncoderLayer(
            d_model=config.dim, nhead=config.heads,
            dim_feedforward=config.feedforward, batch_first=True,
            dropout=0.1, norm_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.layers,
                                             enable_nested_tensor=False)
        self.norm = nn.LayerNorm(config.dim)
        self.out = nn.Linear(config.dim, size)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        # ids: (batch, length) -> logits (batch, length, vocab)
        positions = torch.arange(ids.size(1), device=ids.device).unsqueeze(0)
        hidden = self.embed(ids) + self.positions(positions)
        padding = ids.eq(PAD)
        hidden = self.encoder(hidden, src_key_padding_mask=padding)
        return self.out(self.norm(hidden))


class ScoringModel:
    """Vocabulary plus network, with the candidate-scoring contract."""

    def __init__(self, vocab: Vocabulary, config: ModelConfig, seed: int | None = None):
        self.vocab = vocab
        config.vocab = vocab.itos
        if seed is not None:
            torch.manual_seed(seed)
        self.net = MaskedLM(config)
        self.net.eval()
        self.config = config

    def _inputs(self, masked_text: str, candidate_len: int,
                mask_token: str = MASK_LITERAL) -> tuple[list[int], list[int]]:
        """Token ids with the mask expanded to ``candidate_len`` slots."""
        if masked_text.count(mask_token) != 1:
            raise ValueError("masked text must contain exactly one mask token")
        before, after = masked_text.split(mask_token)
        ids = self.vocab.encode(tokenize(before))
        mask_positions = list(range(len(ids), len(ids) + candidate_len))
        ids = ids + [MASK] * candidate_len + self.vocab.encode(tokenize(after))
        limit = self.config.max_len
        if len(ids) > limit:
            # keep a window around the mask slots
            center = mask_positions[0]
            start = max(0, min(center - limit // 2, len(ids) - limit))
            ids = ids[start:start + limit]
            mask_positions = [p - start for p in mask_positions]
        return ids, mask_positions

    def candidate_token_logprobs(self, masked_text: str, candidate: str,
                                 mask_token: str = MASK_LITERAL) -> torch.Tensor:
        """Per-token log-probabilities of the candidate filling the mask."""
        tokens = tokenize(candidate) or [candidate or "[UNK]"]
        ids, positions = self._inputs(masked_text, len(tokens), mask_token)
        batch = torch.tensor([ids], dtype=torch.long)
        logits = self.net(batch)[0]
        logprobs = torch.log_softmax(logits, dim=-1)
        target = torch.tensor(self.vocab.encode(tokens), dtype=torch.long)
        rows = torch.tensor(positions, dtype=torch.long)
        return logprobs[rows, target]

    def score_candidate(self, masked_text: str, candidate: str,
                        mask_token: str = MASK_LITERAL) -> float:
        """Deterministic inference-mode score (dropout off)."""
        was_training = self.net.training
        self.net.eval()
        try:
            with torch.no_grad():
                per_token = self.candidate_token_logprobs(masked_text, candidate,
                                                          mask_token)
            return float(per_token.mean())
        finally:
            if was_training:
                self.net.train()

    def pair_logprobs(self, masked_text: str, correct: str, incorrect: str,
                      ) -> tuple[torch.Tensor, torch.Tensor]:
        """Differentiable mean log-probabilities for a training pair."""
        logp_a = self.candidate_token_logprobs(masked_text, correct).mean()
        logp_b = self.candidate_token_logprobs(masked_text, incorrect).mean()
        return logp_a, logp_b

    def save(self, path) -> None:
        torch.save({
            "vocab": self.vocab.itos,
            "dim": self.config.dim,
            "heads": self.config.heads,
            "layers": self.config.layers,
            "feedforward": self.config.feedforward,
            "max_len": self.config.max_len,
            "state": self.net.state_dict(),
        }, path)

    @classmethod
    def load(cls, path) -> "ScoringModel":
        payload = torch.load(path, map_location="cpu", weights_only=True)
        vocab = Vocabulary([])
        vocab.itos = list(payload["vocab"])
        vocab.stoi = {tok: i for i, tok in enumerate(vocab.itos)}
        config = ModelConfig(vocab=vocab.itos, dim=payload["dim"],
                             heads=payload["heads"], layers=payload["layers"],
                             feedforward=payload["feedforward"],
                             max_len=payload["max_len"])
        model = cls.__new__(cls)
        model.vocab = vocab
        model.config = config
        model.net = MaskedLM(config)
        model.net.load_state_dict(payload["state"])
        model.net.eval()
        return model
