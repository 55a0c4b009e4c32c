"""Compact transformer encoder-decoder with source-side target-language factors.

The source embedding concatenates a token embedding of width
``d_model - factor_dim`` with a learned factor embedding of width
``factor_dim`` that encodes the *target* language of the pair, so one
multilingual model can be steered to any output language.  With
``factor_dim=0`` the model is a plain (bilingual) transformer.

Layers are pre-norm (LayerNorm before each sublayer, residual add, final
norm after the stack) with fixed sinusoidal positional encodings.  Future
positions are masked with -inf before the softmax, so their attention
weights are exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import torch
from torch import Tensor, nn

from .errors import ConfigError, DataError, TransferError
from .subword import BOS_ID, EOS_ID, PAD_ID

FULL_PRESET = dict(enc_layers=6, dec_layers=6, heads=8, d_model=512, d_ff=2048)


@dataclass(frozen=True)
class ModelConfig:
    token_vocab: int
    factor_vocab: int = 2
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    d_model: int = 128
    d_ff: int = 256
    factor_dim: int = 8
    dropout: float = 0.1
    label_smoothing: float = 0.1
    max_len: int = 128

    def __post_init__(self):
        if self.token_vocab <= 0:
            raise ConfigError("token_vocab must be positive")
        if self.factor_vocab < 2:
            raise ConfigError("factor_vocab must be at least 2")
        if min(self.enc_layers, self.dec_layers, self.heads, self.d_ff, self.max_len) <= 0:
            raise ConfigError("layer counts, heads, d_ff and max_len must be positive")
        if self.d_model % self.heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0 <= self.factor_dim < self.d_model:
            raise ConfigError("factor_dim must lie in [0, d_model)")
        if not 0 <= self.dropout < 1 or not 0 <= self.label_smoothing < 1:
            raise ConfigError("dropout and label_smoothing must lie in [0, 1)")

    @classmethod
    def full_scale(cls, token_vocab: int, factor_vocab: int, **overrides) -> "ModelConfig":
        return cls(token_vocab=token_vocab, factor_vocab=factor_vocab,
                   **{**FULL_PRESET, **overrides})

    def without_factors(self) -> "ModelConfig":
        return replace(self, factor_dim=0)


@dataclass
class FactoredBatch:
    """One training batch: padded id matrices plus the per-sentence factor.

    `src_factor[i]` is the factor id of sentence i's target language,
    broadcast across its source tokens inside the model.  `tgt_out` is
    `tgt_in` shifted left by one position with eos closing each row.
    `word_count` is the total whitespace word count of the target side
    (the packing budget); loss normalization uses non-pad tokens.
    """

    src_ids: Tensor
    src_factor: Tensor
    tgt_in: Tensor
    tgt_out: Tensor
    word_count: int

    @property
    def token_count(self) -> int:
        return int((self.tgt_out != PAD_ID).sum())

    def __len__(self) -> int:
        return self.src_ids.size(0)


def pack_batch(
    src_rows: Sequence[Sequence[int]],
    tgt_rows: Sequence[Sequence[int]],
    factors: Sequence[int],
    word_count: int = 0,
) -> FactoredBatch:
    """Pad raw token-id rows into a FactoredBatch.

    Source rows get a closing eos; target rows become (bos + ids) /
    (ids + eos) for the shifted input/output pair.
    """
    if not (len(src_rows) == len(tgt_rows) == len(factors)):
        raise DataError("src_rows, tgt_rows and factors must have equal lengths")
    src = [list(r) + [EOS_ID] for r in src_rows]
    tgt_in = [[BOS_ID] + list(r) for r in tgt_rows]
    tgt_out = [list(r) + [EOS_ID] for r in tgt_rows]

    def pad(rows: list[list[int]]) -> Tensor:
        width = max(len(r) for r in rows)
        out = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
        for i, row in enumerate(rows):
            out[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        return out

    return FactoredBatch(
        src_ids=pad(src),
        src_factor=torch.tensor(list(factors), dtype=torch.long),
        tgt_in=pad(tgt_in),
        tgt_out=pad(tgt_out),
        word_count=word_count,
    )


def pad_mask(ids: Tensor) -> Tensor:
    """(B, 1, 1, S) boolean keep-mask over key positions."""
    return (ids != PAD_ID)[:, None, None, :]


def causal_mask(size: int) -> Tensor:
    """(1, 1, T, T) boolean mask; position t may attend to positions <= t."""
    return torch.ones(size, size, dtype=torch.bool).tril()[None, None]


def sinusoidal_encoding(max_len: int, d_model: int, dtype=torch.float32) -> Tensor:
    position = torch.arange(max_len, dtype=torch.float64)[:, None]
    freq = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float64)
                     * (-math.log(10000.0) / d_model))
    pe = torch.zeros(max_len, d_model, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(position * freq)
    pe[:, 1::2] = torch.cos(position * freq[: d_model // 2])
    return pe.to(dtype)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.d_k = d_model // heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)
        self.record_weights = False
        self.last_weights: Tensor | None = None

    def forward(self, query: Tensor, key: Tensor, value: Tensor, mask: Tensor | None) -> Tensor:
        batch = query.size(0)

        def split(t: Tensor, proj: nn.Linear) -> Tensor:
            return proj(t).view(batch, -1, self.heads, self.d_k).transpose(1, 2)

        q, k, v = split(query, self.q_proj), split(key, self.k_proj), split(value, self.v_proj)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_k)
        if mask is not None:
            scores = scores.masked_fill(~mask, float("-inf"))
        weights = scores.softmax(dim=-1)
        if self.record_weights:
            self.last_weights = weights.detach()
        context = self.dropout(weights) @ v
        context = context.transpose(1, 2).contiguous().view(batch, -1, self.heads * self.d_k)
        return self.out_proj(context)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.lift = nn.Linear(d_model, d_ff)
        self.lower = nn.Linear(d_ff, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.lower(self.dropout(self.lift(x).relu()))


class PreNorm(nn.Module):
    """x + dropout(sublayer(norm(x)))"""

    def __init__(self, d_model: int, dropout: float):
        super().__init__()
        self.norm = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor, sublayer) -> Tensor:
        return x + self.dropout(sublayer(self.norm(x)))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.sub1 = PreNorm(cfg.d_model, cfg.dropout)
        self.sub2 = PreNorm(cfg.d_model, cfg.dropout)

    def forward(self, x: Tensor, src_mask: Tensor) -> Tensor:
        x = self.sub1(x, lambda h: self.self_attn(h, h, h, src_mask))
        return self.sub2(x, self.ffn)


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads, cfg.dropout)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.sub1 = PreNorm(cfg.d_model, cfg.dropout)
        self.sub2 = PreNorm(cfg.d_model, cfg.dropout)
        self.sub3 = PreNorm(cfg.d_model, cfg.dropout)

    def forward(self, y: Tensor, memory: Tensor, tgt_mask: Tensor, src_mask: Tensor) -> Tensor:
        y = self.sub1(y, lambda h: self.self_attn(h, h, h, tgt_mask))
        y = self.sub2(y, lambda h: self.cross_attn(h, memory, memory, src_mask))
        return self.sub3(y, self.ffn)


class FactoredTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        token_dim = cfg.d_model - cfg.factor_dim
        self.src_embed = nn.Embedding(cfg.token_vocab, token_dim, padding_idx=PAD_ID)
        self.factor_embed = (
            nn.Embedding(cfg.factor_vocab, cfg.factor_dim) if cfg.factor_dim else None
        )
        self.tgt_embed = nn.Embedding(cfg.token_vocab, cfg.d_model, padding_idx=PAD_ID)
        self.enc_layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.enc_layers))
        self.enc_norm = nn.LayerNorm(cfg.d_model)
        self.dec_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.dec_layers))
        self.dec_norm = nn.LayerNorm(cfg.d_model)
        self.generator = nn.Linear(cfg.d_model, cfg.token_vocab)
        self.embed_dropout = nn.Dropout(cfg.dropout)
        self.register_buffer("pe", sinusoidal_encoding(cfg.max_len, cfg.d_model))

    def _check_ids(self, ids: Tensor, limit: int, what: str) -> None:
        if ids.numel() and not (0 <= int(ids.min()) and int(ids.max()) < limit):
            raise DataError(f"{what} id outside [0, {limit})")

    def encode(self, src_ids: Tensor, src_factor: Tensor) -> Tensor:
        cfg = self.cfg
        self._check_ids(src_ids, cfg.token_vocab, "source token")
        self._check_ids(src_factor, cfg.factor_vocab, "factor")
        x = self.src_embed(src_ids)
        if self.factor_embed is not None:
            factors = self.factor_embed(src_factor)[:, None, :].expand(
                -1, src_ids.size(1), -1
            )
            x = torch.cat([x, factors], dim=-1)
        x = x * math.sqrt(cfg.d_model) + self.pe[: src_ids.size(1)]
        x = self.embed_dropout(x)
        src_mask = pad_mask(src_ids)
        for layer in self.enc_layers:
            x = layer(x, src_mask)
        return self.enc_norm(x)

    def decode(self, memory: Tensor, src_ids: Tensor, tgt_in: Tensor) -> Tensor:
        cfg = self.cfg
        self._check_ids(tgt_in, cfg.token_vocab, "target token")
        y = self.tgt_embed(tgt_in) * math.sqrt(cfg.d_model) + self.pe[: tgt_in.size(1)]
        y = self.embed_dropout(y)
        tgt_mask = causal_mask(tgt_in.size(1)) & pad_mask(tgt_in)
        src_mask = pad_mask(src_ids)
        for layer in self.dec_layers:
            y = layer(y, memory, tgt_mask, src_mask)
        return self.dec_norm(y)

    def forward(self, batch: FactoredBatch) -> Tensor:
        """Logits (B, T, token_vocab) for every target position."""
        memory = self.encode(batch.src_ids, batch.src_factor)
        return self.generator(self.decode(memory, batch.src_ids, batch.tgt_in))

    def loss(self, batch: FactoredBatch) -> Tensor:
        return label_smoothed_loss(self(batch), batch.tgt_out, self.cfg.label_smoothing)

    def record_attention(self, on: bool = True) -> None:
        for module in self.modules():
            if isinstance(module, MultiHeadAttention):
                module.record_weights = on


def label_smoothed_loss(logits: Tensor, tgt_out: Tensor, smoothing: float) -> Tensor:
    """Cross-entropy averaged per non-pad target token, with `smoothing`
    probability mass spread uniformly over the vocabulary minus the gold
    and pad entries."""
    logp = logits.log_softmax(dim=-1)
    mask = tgt_out != PAD_ID
    n_tokens = mask.sum()
    if int(n_tokens) == 0:
        raise DataError("batch has no non-pad target tokens")
    gold = logp.gather(-1, tgt_out.unsqueeze(-1)).squeeze(-1)
    if smoothing == 0.0:
        per_token = -gold
    else:
        vocab = logits.size(-1)
        rest = logp.sum(dim=-1) - gold - logp[..., PAD_ID]
        per_token = -(1.0 - smoothing) * gold - smoothing / (vocab - 2) * rest
    return (per_token * mask).sum() / n_tokens


def cross_entropy_total(logits: Tensor, tgt_out: Tensor) -> tuple[Tensor, int]:
    """Unsmoothed total negative log-likelihood and the non-pad token count
    (the perplexity ingredients)."""
    logp = logits.log_softmax(dim=-1)
    mask = tgt_out != PAD_ID
    gold = logp.gather(-1, tgt_out.unsqueeze(-1)).squeeze(-1)
    return -(gold * mask).sum(), int(mask.sum())


def build_model(cfg: ModelConfig, seed: int = 0, dtype=torch.float32) -> FactoredTransformer:
    """Deterministic construction: scaled-uniform matrices, zero biases."""
    torch.manual_seed(seed)
    model = FactoredTransformer(cfg).to(dtype)
    for name, param in model.named_parameters():
        if param.dim() > 1:
            nn.init.xavier_uniform_(param)
        else:
            nn.init.zeros_(param)
    with torch.no_grad():
        model.src_embed.weight[PAD_ID].zero_()
        model.tgt_embed.weight[PAD_ID].zero_()
        for norm in (m for m in model.modules() if isinstance(m, nn.LayerNorm)):
            norm.weight.fill_(1.0)
    model.eval()
    return model


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form trainable-parameter count for a given configuration."""
    d, f, v = cfg.d_model, cfg.d_ff, cfg.token_vocab
    attn = 4 * (d * d + d)
    norm = 2 * d
    ffn = d * f + f + f * d + d
    enc_layer = attn + ffn + 2 * norm
    dec_layer = 2 * attn + ffn + 3 * norm
    total = v * (d - cfg.factor_dim)  # source token embedding
    total += cfg.factor_vocab * cfg.factor_dim if cfg.factor_dim else 0
    total += v * d  # target token embedding
    total += cfg.enc_layers * enc_layer + norm
    total += cfg.dec_layers * dec_layer + norm
    total += d * v + v  # generator
    return total


def state_tensors(model: FactoredTransformer) -> dict[str, Tensor]:
    return {name: tensor for name, tensor in model.state_dict().items()}


def init_from(model: FactoredTransformer, parent_state: dict[str, Tensor]) -> None:
    """Copy parent weights verbatim into `model` (transfer learning)."""
    own = model.state_dict()
    problems = []
    for name, tensor in own.items():
        if name not in parent_state:
            problems.append(f"{name}: missing from parent")
        elif tuple(parent_state[name].shape) != tuple(tensor.shape):
            problems.append(
                f"{name}: parent {tuple(parent_state[name].shape)} vs {tuple(tensor.shape)}"
            )
    problems.extend(f"{name}: unknown to child" for name in parent_state if name not in own)
    if problems:
        raise TransferError("incompatible parent checkpoint: " + "; ".join(sorted(problems)))
    model.load_state_dict(parent_state)
