"""Prompt-to-conditioning encoder: whitespace tokens, trainable embeddings,
mean pooling, and a bias-free linear projection.

The smallest component that still supports a trainable identifier token:
the vocabulary is built from the prompts a run will see plus the identifier
token; unknown tokens map to a reserved id. An empty prompt pools to the
zero vector, and the projection has no bias, so it encodes to exactly zero.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import torch
from torch import nn

UNK_TOKEN = "<unk>"


def tokenize(prompt: str) -> list[str]:
    return prompt.lower().split()


def build_vocab(prompts: Iterable[str], identifier_token: str | None = None) -> dict[str, int]:
    """Token -> id map over the given prompts, with <unk> reserved at id 0."""
    vocab = {UNK_TOKEN: 0}
    tokens = []
    if identifier_token:
        tokens.extend(tokenize(identifier_token))
    for prompt in prompts:
        tokens.extend(tokenize(prompt))
    for token in tokens:
        if token not in vocab:
            vocab[token] = len(vocab)
    return vocab


class TextEncoder(nn.Module):
    """Maps a prompt to a fixed-length conditioning vector."""

    def __init__(self, vocab: dict[str, int], token_dim: int = 16, cond_dim: int = 16,
                 seed: int = 0):
        super().__init__()
        self.vocab = dict(vocab)
        self.token_dim = token_dim
        self.cond_dim = cond_dim
        g = torch.Generator().manual_seed(seed)
        self.embedding = nn.Embedding(len(self.vocab), token_dim)
        self.projection = nn.Linear(token_dim, cond_dim, bias=False)
        with torch.no_grad():
            self.embedding.weight.copy_(
                torch.randn(self.embedding.weight.shape, generator=g) * 0.2
            )
            self.projection.weight.copy_(
                torch.randn(self.projection.weight.shape, generator=g) / token_dim ** 0.5
            )

    def to_config(self) -> dict:
        return {"vocab": self.vocab, "token_dim": self.token_dim, "cond_dim": self.cond_dim}

    @classmethod
    def from_config(cls, config: dict) -> "TextEncoder":
        return cls(config["vocab"], config["token_dim"], config["cond_dim"])

    def token_ids(self, prompt: str) -> list[int]:
        return [self.vocab.get(token, self.vocab[UNK_TOKEN]) for token in tokenize(prompt)]

    def forward(self, prompts: Sequence[str] | str) -> torch.Tensor:
        """Encode prompts to a (N, cond_dim) tensor (or (cond_dim,) for one string)."""
        single = isinstance(prompts, str)
        batch = [prompts] if single else list(prompts)
        dtype = self.projection.weight.dtype
        pooled = []
        for prompt in batch:
            ids = self.token_ids(prompt)
            if not ids:
                pooled.append(torch.zeros(self.token_dim, dtype=dtype))
            else:
                emb = self.embedding(torch.tensor(ids, dtype=torch.long))
                pooled.append(emb.mean(dim=0))
        out = self.projection(torch.stack(pooled))
        return out.squeeze(0) if single else out


def encode_prompt(encoder: TextEncoder, prompt: str) -> torch.Tensor:
    """Deterministic fixed-length conditioning vector for one prompt."""
    with torch.no_grad():
        return encoder(prompt)
