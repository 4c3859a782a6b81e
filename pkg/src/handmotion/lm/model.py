"""Small encoder-decoder transformer over the unified text+motion vocabulary."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..errors import ValidationError, VocabularyError


@dataclass(frozen=True)
class LMConfig:
    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    d_ff: int = 256
    max_len: int = 192
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValidationError("d_model must be divisible by n_heads")

    @classmethod
    def tiny(cls, vocab_size: int) -> "LMConfig":
        return cls(vocab_size=vocab_size)

    @classmethod
    def small(cls, vocab_size: int) -> "LMConfig":
        return cls(
            vocab_size=vocab_size,
            d_model=256,
            n_heads=8,
            enc_layers=4,
            dec_layers=4,
            d_ff=512,
        )


class Seq2SeqLM(nn.Module):
    """Teacher-forced encoder-decoder; <pad> doubles as the decoder start."""

    def __init__(self, config: LMConfig, pad_id: int):
        super().__init__()
        self.config = config
        self.pad_id = pad_id
        d = config.d_model
        self.embed = nn.Embedding(config.vocab_size, d)
        self.pos_src = nn.Embedding(config.max_len, d)
        self.pos_tgt = nn.Embedding(config.max_len, d)
        enc_layer = nn.TransformerEncoderLayer(
            d_model=d,
            nhead=config.n_heads,
            dim_feedforward=config.d_ff,
            dropout=config.dropout,
            batch_first=True,
            norm_first=True,
        )
        dec_layer = nn.TransformerDecoderLayer(
            d_model=d,
            nhead=config.n_heads,
            dim_feedforward=config.d_ff,
            dropout=config.dropout,
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            enc_layer, config.enc_layers, enable_nested_tensor=False
        )
        self.decoder = nn.TransformerDecoder(dec_layer, config.dec_layers)
        self.out_proj = nn.Linear(d, config.vocab_size)

    def _check_ids(self, ids: torch.Tensor) -> None:
        if ids.numel() == 0:
            return
        if int(ids.max()) >= self.config.vocab_size or int(ids.min()) < 0:
            raise VocabularyError(
                f"token id outside vocabulary of size {self.config.vocab_size}"
            )
        if ids.shape[-1] > self.config.max_len:
            raise ValidationError(
                f"sequence length {ids.shape[-1]} exceeds max_len {self.config.max_len}"
            )

    def _positions(self, ids: torch.Tensor) -> torch.Tensor:
        return torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)

    def encode_source(self, src: torch.Tensor):
        self._check_ids(src)
        src_pad = src == self.pad_id
        x = self.embed(src) + self.pos_src(self._positions(src))
        memory = self.encoder(x, src_key_padding_mask=src_pad)
        return memory, src_pad

    def decode_logits(
        self, tgt_in: torch.Tensor, memory: torch.Tensor, src_pad: torch.Tensor
    ) -> torch.Tensor:
        self._check_ids(tgt_in)
        n = tgt_in.shape[1]
        causal = torch.triu(torch.ones(n, n, dtype=torch.bool, device=tgt_in.device), 1)
        x = self.embed(tgt_in) + self.pos_tgt(self._positions(tgt_in))
        hidden = self.decoder(
            x,
            memory,
            tgt_mask=causal,
            memory_key_padding_mask=src_pad,
        )
        return self.out_proj(hidden)

    def forward(self, src: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        """Teacher-forced logits over the target positions (B, L, |V|)."""
        memory, src_pad = self.encode_source(src)
        start = torch.full(
            (target.shape[0], 1), self.pad_id, dtype=target.dtype, device=target.device
        )
        tgt_in = torch.cat([start, target[:, :-1]], dim=1)
        return self.decode_logits(tgt_in, memory, src_pad)


def build_lm(config: LMConfig, pad_id: int, seed: int = 0) -> Seq2SeqLM:
    torch.manual_seed(seed)
    return Seq2SeqLM(config, pad_id)
