"""Pluggable text encoders.

An encoder turns a batch of raw texts into one classification embedding
per text. The "tiny" encoder is a randomly initialized hashing-vocabulary
transformer small enough for tests; "hf:<model-id>" wraps a pre-trained
transformer for replication runs (imported lazily, needs the
``replication`` extra and downloaded weights).
"""

from __future__ import annotations

import zlib

import torch
from torch import nn

TINY_BUCKETS = 512
TINY_DIM = 32
TINY_MAX_LEN = 64
_CLS_ID = 0  # reserved bucket acting as the classification token
_OFFSET = 1


def hash_tokenize(text: str, max_len: int = TINY_MAX_LEN) -> list[int]:
    """Stable hashing tokenizer: lowercased whitespace tokens -> buckets.

    crc32 keeps ids stable across processes (unlike builtin hash()).
    """
    ids = [_CLS_ID]
    for token in text.lower().split():
        bucket = zlib.crc32(token.encode("utf-8")) % (TINY_BUCKETS - _OFFSET)
        ids.append(bucket + _OFFSET)
        if len(ids) >= max_len:
            break
    return ids


class TinyEncoder(nn.Module):
    """One transformer layer over hashed tokens; CLS position comes back."""

    dim = TINY_DIM

    def __init__(self):
        super().__init__()
        self.embedding = nn.Embedding(TINY_BUCKETS, TINY_DIM)
        self.position = nn.Embedding(TINY_MAX_LEN, TINY_DIM)
        layer = nn.TransformerEncoderLayer(
            d_model=TINY_DIM,
            nhead=4,
            dim_feedforward=64,
            batch_first=True,
            dropout=0.0,
        )
        # The nested-tensor fast path is a moving prototype; keep the
        # plain deterministic path.
        self.transformer = nn.TransformerEncoder(
            layer, num_layers=1, enable_nested_tensor=False
        )

    def tokenize(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        batches = [hash_tokenize(t) for t in texts]
        width = max(len(b) for b in batches)
        ids = torch.zeros(len(batches), width, dtype=torch.long)
        mask = torch.ones(len(batches), width, dtype=torch.bool)  # True = pad
        for i, b in enumerate(batches):
            ids[i, : len(b)] = torch.tensor(b, dtype=torch.long)
            mask[i, : len(b)] = False
        return ids, mask

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.embedding(ids) + self.position(positions)[None, :, :]
        x = self.transformer(x, src_key_padding_mask=pad_mask)
        return x[:, 0, :]  # classification-token embedding


class HFEncoder(nn.Module):
    """Wrapper around a pre-trained transformer (replication mode)."""

    def __init__(self, model_id: str):
        super().__init__()
        from transformers import AutoModel, AutoTokenizer  # lazy heavy import

        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id)
        self.dim = self.model.config.hidden_size

    def tokenize(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        enc = self._tokenizer(
            texts, padding=True, truncation=True, max_length=512, return_tensors="pt"
        )
        return enc["input_ids"], ~enc["attention_mask"].bool()

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        out = self.model(input_ids=ids, attention_mask=(~pad_mask).long())
        return out.last_hidden_state[:, 0, :]


def build_encoder(encoder_id: str) -> nn.Module:
    if encoder_id == "tiny":
        return TinyEncoder()
    if encoder_id.startswith("hf:"):
        return HFEncoder(encoder_id[3:])
    raise ValueError(f"unknown encoder id {encoder_id!r}")


class MultiLabelClassifier(nn.Module):
    """Encoder plus one dense output layer of width |labels|."""

    def __init__(self, encoder: nn.Module, n_labels: int):
        super().__init__()
        self.encoder = encoder
        self.output = nn.Linear(encoder.dim, n_labels)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        return self.output(self.encoder(ids, pad_mask))
