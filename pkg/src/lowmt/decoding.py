"""Greedy and beam decoding over a trained factored transformer.

Decoding is deterministic given parameters: specials that must never be
emitted (pad, bos, unk) are masked to -inf, ties resolve to the lowest
token id, and beam candidates are ranked by length-normalized
log-probability (`score / len**length_norm`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
from torch import Tensor

from .errors import ConfigError
from .model import FactoredTransformer
from .subword import BOS_ID, EOS_ID, PAD_ID, UNK_ID, SubwordModel

BEAM_SIZE = 5
LENGTH_NORM = 1.0

_FORBIDDEN = [PAD_ID, BOS_ID, UNK_ID]


@dataclass(frozen=True)
class TranslationResult:
    text: str
    token_ids: tuple[int, ...]  # emitted ids, eos included when reached
    score: float  # length-normalized sum of token log-probabilities
    truncated: bool  # True when max_len cut generation before eos


def factor_index(languages: Sequence[str], lang: str) -> int:
    """Factor id of `lang`: its position in the sorted language list."""
    ordered = sorted(languages)
    if lang not in ordered:
        raise ConfigError(f"unknown target language {lang!r}; known: {', '.join(ordered)}")
    return ordered.index(lang)


def _source_batch(
    model: FactoredTransformer, subword: SubwordModel, texts: Sequence[str]
) -> Tensor:
    """Padded source matrix; every row ends with eos (so an empty source
    still presents one attendable position).  Overlong sources are cut to
    the model's positional range."""
    rows = [subword.encode(t)[: model.cfg.max_len - 1] + [EOS_ID] for t in texts]
    width = max(len(r) for r in rows)
    src = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
    for i, row in enumerate(rows):
        src[i, : len(row)] = torch.tensor(row, dtype=torch.long)
    return src


def _finalize(
    subword: SubwordModel, ids: Sequence[int], score: float, length_norm: float
) -> TranslationResult:
    ids = list(ids)
    truncated = EOS_ID not in ids
    if not truncated:
        ids = ids[: ids.index(EOS_ID) + 1]
    norm = max(1, len(ids)) ** length_norm
    return TranslationResult(
        text=subword.decode(ids), token_ids=tuple(ids), score=score / norm, truncated=truncated
    )


@torch.no_grad()
def greedy_translate_batch(
    model: FactoredTransformer,
    subword: SubwordModel,
    texts: Sequence[str],
    factor: int | Sequence[int],
    max_len: int | None = None,
    length_norm: float = LENGTH_NORM,
) -> list[TranslationResult]:
    """Argmax decoding of a whole batch at once (one factor id, or one per
    sentence)."""
    if not texts:
        return []
    model.eval()
    cfg = model.cfg
    max_len = min(max_len or cfg.max_len, cfg.max_len)
    src_ids = _source_batch(model, subword, texts)
    n = len(texts)
    factors = torch.tensor(
        [factor] * n if isinstance(factor, int) else list(factor), dtype=torch.long
    )
    memory = model.encode(src_ids, factors)
    ys = torch.full((n, 1), BOS_ID, dtype=torch.long)
    done = torch.zeros(n, dtype=torch.bool)
    scores = torch.zeros(n, dtype=memory.dtype)
    for _ in range(max_len):
        hidden = model.decode(memory, src_ids, ys)
        logp = model.generator(hidden[:, -1]).log_softmax(dim=-1)
        logp[:, _FORBIDDEN] = float("-inf")
        step_score, next_ids = logp.max(dim=-1)
        next_ids = torch.where(done, torch.full_like(next_ids, PAD_ID), next_ids)
        scores = scores + torch.where(done, torch.zeros_like(step_score), step_score)
        ys = torch.cat([ys, next_ids[:, None]], dim=1)
        done |= next_ids == EOS_ID
        if bool(done.all()):
            break
    out = []
    for i in range(n):
        ids = [t for t in ys[i, 1:].tolist() if t != PAD_ID]
        out.append(_finalize(subword, ids, float(scores[i]), length_norm))
    return out


@torch.no_grad()
def beam_translate(
    model: FactoredTransformer,
    subword: SubwordModel,
    text: str,
    factor: int,
    beam_size: int = BEAM_SIZE,
    length_norm: float = LENGTH_NORM,
    max_len: int | None = None,
) -> TranslationResult:
    """Beam search for one sentence; returns the completed hypothesis with
    the highest length-normalized log-probability (best running hypothesis,
    flagged truncated, if nothing completed)."""
    if beam_size < 1:
        raise ConfigError("beam_size must be at least 1")
    model.eval()
    cfg = model.cfg
    max_len = min(max_len or cfg.max_len, cfg.max_len)
    src_ids = _source_batch(model, subword, [text])
    memory = model.encode(src_ids, torch.tensor([factor], dtype=torch.long))

    def step_logp(ys: Tensor) -> Tensor:
        k = ys.size(0)
        hidden = model.decode(memory.expand(k, -1, -1), src_ids.expand(k, -1), ys)
        logp = model.generator(hidden[:, -1]).log_softmax(dim=-1)
        logp[:, _FORBIDDEN] = float("-inf")
        return logp

    def ranked(ids: Sequence[int], score: float) -> float:
        return score / max(1, len(ids)) ** length_norm

    ys = torch.full((1, 1), BOS_ID, dtype=torch.long)
    scores = torch.zeros(1, dtype=memory.dtype)
    finished: list[tuple[list[int], float]] = []
    for _ in range(max_len):
        # Hypotheses that reach eos keep their beam slot, so only the top
        # `remaining` candidates are expanded; with beam_size=1 this follows
        # the argmax path exactly.
        remaining = beam_size - len(finished)
        logp = step_logp(ys)
        cand = (scores[:, None] + logp).view(-1)
        top_scores, flat = cand.topk(min(remaining, cand.numel()))
        next_ys, next_scores = [], []
        for rank in range(top_scores.numel()):
            beam_i, token = divmod(int(flat[rank]), logp.size(-1))
            if token == EOS_ID:
                finished.append((ys[beam_i].tolist()[1:] + [token], float(top_scores[rank])))
            else:
                next_ys.append(ys[beam_i].tolist() + [token])
                next_scores.append(top_scores[rank])
        if not next_ys:
            break
        ys = torch.tensor(next_ys, dtype=torch.long)
        scores = torch.stack(next_scores)
    if finished:
        best_ids, best_score = max(finished, key=lambda fs: ranked(*fs))
        return _finalize(subword, best_ids, best_score, length_norm)
    best = int(scores.argmax())
    return _finalize(subword, ys[best].tolist()[1:], float(scores[best]), length_norm)


def translate(
    model: FactoredTransformer,
    subword: SubwordModel,
    languages: Sequence[str],
    src_text: str,
    tgt_lang: str,
    mode: str = "greedy",
    beam_size: int = BEAM_SIZE,
    length_norm: float = LENGTH_NORM,
    max_len: int | None = None,
) -> TranslationResult:
    fid = factor_index(languages, tgt_lang)
    if mode == "greedy":
        return greedy_translate_batch(
            model, subword, [src_text], fid, max_len=max_len, length_norm=length_norm
        )[0]
    if mode == "beam":
        return beam_translate(
            model, subword, src_text, fid,
            beam_size=beam_size, length_norm=length_norm, max_len=max_len,
        )
    raise ConfigError(f"unknown decoding mode {mode!r} (expected greedy or beam)")
