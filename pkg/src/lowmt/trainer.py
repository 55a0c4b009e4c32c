"""Training loop: word-count batching, Adam with inverse-square-root
schedule and linear warmup, perplexity-based early stopping, and
transfer/fine-tune continuation.

Checkpointing is driven by parameter-update counts.  A step-0 baseline
checkpoint is always recorded, so transfer/fine-tune runs that never
improve return the parent parameters unchanged.  "Improvement" means a
strict decrease of validation perplexity.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from .checkpoint import Checkpoint, save_checkpoint
from .corpus import SentencePair, tsv_table
from .decoding import factor_index
from .errors import ConfigError, DataError, NumericError
from .model import FactoredBatch, FactoredTransformer, cross_entropy_total, pack_batch
from .subword import SubwordModel

ADAM_BETAS = (0.9, 0.98)
ADAM_EPS = 1e-9

FULL_PRESET = dict(batch_words=6000, checkpoint_interval=2000, patience=32)


@dataclass(frozen=True)
class TrainConfig:
    """Desk-scale defaults; `full_scale()` gives the production-size preset
    (batch 6000 words, interval 2000 updates, patience 32 checkpoints)."""

    batch_words: int = 500
    checkpoint_interval: int = 50
    patience: int = 8
    peak_lr: float = 2e-3
    warmup_steps: int = 100
    fine_tune_lr: float = 2e-4
    max_updates: int | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_words, self.checkpoint_interval, self.patience,
               self.warmup_steps) <= 0:
            raise ConfigError("batch_words, checkpoint_interval, patience and "
                              "warmup_steps must be positive")
        if self.peak_lr <= 0 or self.fine_tune_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.max_updates is not None and self.max_updates <= 0:
            raise ConfigError("max_updates must be positive when set")

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        return cls(**{**FULL_PRESET, **overrides})


@dataclass
class TrainRecord:
    step: int
    train_loss: float
    valid_ppl: float
    is_best: bool
    wall_time: float

    def key(self) -> tuple:
        """Determinism-comparable view (wall time excluded)."""
        return (self.step, self.train_loss, self.valid_ppl, self.is_best)


@dataclass
class TrainResult:
    best: Checkpoint
    history: list[TrainRecord]
    stopped: str  # "patience" | "max_updates"
    skipped_sentences: int = 0


def inverse_sqrt_lr(cfg: TrainConfig, step: int) -> float:
    """Linear warmup to peak_lr, then decay proportional to 1/sqrt(step)."""
    return cfg.peak_lr * min(step / cfg.warmup_steps, (cfg.warmup_steps / step) ** 0.5)


def make_batches(
    pairs: Sequence[SentencePair],
    subword: SubwordModel,
    languages: Sequence[str],
    batch_words: int,
    seed,
    max_len: int,
) -> tuple[list[FactoredBatch], int]:
    """Shuffle, bucket by target length, and greedily pack sentences so each
    batch carries at most `batch_words` target whitespace words (an overlong
    sentence forms its own batch).  Sentences whose encoded form exceeds
    `max_len` are skipped; the second return value counts them.
    """
    if not pairs:
        raise DataError("cannot batch an empty corpus")
    rng = random.Random(f"batches:{seed}")
    encoded = []
    skipped = 0
    for pair in pairs:
        src_ids = subword.encode(pair.src)
        tgt_ids = subword.encode(pair.tgt)
        if len(src_ids) + 1 > max_len or len(tgt_ids) + 1 > max_len:
            skipped += 1
            continue
        words = len(pair.tgt.split())
        encoded.append((src_ids, tgt_ids, factor_index(languages, pair.tgt_lang), words))
    rng.shuffle(encoded)
    encoded.sort(key=lambda e: (len(e[1]), len(e[0])))  # stable: keeps shuffle within ties
    batches: list[FactoredBatch] = []
    group: list[tuple] = []
    group_words = 0
    for entry in encoded:
        if group and group_words + entry[3] > batch_words:
            batches.append(_pack(group))
            group, group_words = [], 0
        group.append(entry)
        group_words += entry[3]
    if group:
        batches.append(_pack(group))
    rng.shuffle(batches)
    return batches, skipped


def _pack(group: list[tuple]) -> FactoredBatch:
    return pack_batch(
        [e[0] for e in group],
        [e[1] for e in group],
        [e[2] for e in group],
        word_count=sum(e[3] for e in group),
    )


@torch.no_grad()
def evaluate_perplexity(
    model: FactoredTransformer,
    subword: SubwordModel,
    languages: Sequence[str],
    pairs: Sequence[SentencePair],
    batch_words: int = 500,
) -> float:
    """exp(total cross-entropy / total non-pad target tokens), unsmoothed,
    dropout off."""
    if not pairs:
        raise DataError("cannot evaluate perplexity on an empty set")
    model.eval()
    batches, _ = make_batches(pairs, subword, languages, batch_words,
                              seed="ppl", max_len=model.cfg.max_len)
    total_nll, total_tokens = 0.0, 0
    for batch in batches:
        nll, count = cross_entropy_total(model(batch), batch.tgt_out)
        total_nll += float(nll)
        total_tokens += count
    if total_tokens == 0:
        raise DataError("evaluation set has no usable sentences")
    return float(torch.exp(torch.tensor(total_nll / total_tokens)))


def _optimizer_snapshot(
    model: FactoredTransformer, optimizer: torch.optim.Adam
) -> tuple[dict[str, torch.Tensor], dict]:
    tensors: dict[str, torch.Tensor] = {}
    steps: dict[str, int] = {}
    names = {id(p): name for name, p in model.named_parameters()}
    for group in optimizer.param_groups:
        for param in group["params"]:
            state = optimizer.state.get(param)
            if not state:
                continue
            name = names[id(param)]
            tensors[f"{name}.exp_avg"] = state["exp_avg"].detach().clone()
            tensors[f"{name}.exp_avg_sq"] = state["exp_avg_sq"].detach().clone()
            steps[name] = int(state["step"])
    return tensors, {"algo": "adam", "betas": list(ADAM_BETAS), "eps": ADAM_EPS,
                     "step_counts": steps}


def _assert_finite(model: FactoredTransformer, step: int) -> None:
    for name, param in model.named_parameters():
        if not bool(torch.isfinite(param).all()):
            raise NumericError(f"parameter {name} became non-finite at update {step}")


def train(
    model: FactoredTransformer,
    subword: SubwordModel,
    languages: Sequence[str],
    train_pairs: Sequence[SentencePair],
    valid_pairs: Sequence[SentencePair],
    cfg: TrainConfig,
    ckpt_dir: Path | str | None = None,
    constant_lr: float | None = None,
) -> TrainResult:
    """Optimize until `patience` consecutive checkpoints fail to strictly
    improve the best validation perplexity; returns the best checkpoint.

    On a non-finite loss a NumericError is raised with the last finite best
    checkpoint attached as its `.best` attribute.
    """
    if not valid_pairs:
        raise DataError("validation set must be nonempty")
    if not train_pairs:
        raise DataError("training set must be nonempty")
    torch.manual_seed(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.peak_lr,
                                 betas=ADAM_BETAS, eps=ADAM_EPS)
    started = time.monotonic()
    history: list[TrainRecord] = []
    skipped_total = 0

    def checkpoint_now(step: int, train_loss: float) -> Checkpoint:
        ppl = evaluate_perplexity(model, subword, languages, valid_pairs, cfg.batch_words)
        record = TrainRecord(step=step, train_loss=train_loss, valid_ppl=ppl,
                             is_best=False, wall_time=time.monotonic() - started)
        history.append(record)
        opt_tensors, opt_meta = _optimizer_snapshot(model, optimizer)
        return Checkpoint(
            config=model.cfg,
            model_state={k: v.detach().clone() for k, v in model.state_dict().items()},
            step=step,
            valid_ppl=ppl,
            ppl_history=[r.valid_ppl for r in history],
            is_best=False,
            optimizer_tensors=opt_tensors,
            optimizer_meta=opt_meta,
        )

    def adopt_best(ckpt: Checkpoint) -> Checkpoint:
        ckpt.is_best = True
        history[-1].is_best = True
        if ckpt_dir is not None:
            save_checkpoint(ckpt, Path(ckpt_dir) / "best.ckpt")
        return ckpt

    if ckpt_dir is not None:
        Path(ckpt_dir).mkdir(parents=True, exist_ok=True)

    # The baseline record carries no training loss; 0.0 keeps the history
    # comparable across runs (NaN would defeat equality checks).
    best = adopt_best(checkpoint_now(step=0, train_loss=0.0))
    unimproved = 0
    step = 0
    stopped = "patience"
    epoch = 0
    running_loss: list[float] = []
    done = False
    while not done:
        batches, skipped = make_batches(
            train_pairs, subword, languages, cfg.batch_words,
            seed=f"{cfg.seed}:{epoch}", max_len=model.cfg.max_len,
        )
        if epoch == 0:
            skipped_total = skipped
            if not batches:
                raise DataError("every training sentence exceeded max_len")
        epoch += 1
        for batch in batches:
            model.train()
            optimizer.zero_grad()
            loss = model.loss(batch)
            if not bool(torch.isfinite(loss)):
                err = NumericError(f"training loss became non-finite at update {step + 1}")
                err.best = best
                raise err
            loss.backward()
            step += 1
            lr = constant_lr if constant_lr is not None else inverse_sqrt_lr(cfg, step)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.step()
            running_loss.append(float(loss.detach()))
            if step % cfg.checkpoint_interval == 0:
                _assert_finite(model, step)
                ckpt = checkpoint_now(step, sum(running_loss) / len(running_loss))
                running_loss.clear()
                if ckpt_dir is not None:
                    save_checkpoint(ckpt, Path(ckpt_dir) / "latest.ckpt")
                if ckpt.valid_ppl < best.valid_ppl:
                    best = adopt_best(ckpt)
                    unimproved = 0
                else:
                    unimproved += 1
                if unimproved >= cfg.patience:
                    done = True
                    break
            if cfg.max_updates is not None and step >= cfg.max_updates:
                stopped = "max_updates"
                done = True
                break
    model.load_state_dict(best.model_state)
    model.eval()
    result = TrainResult(best=best, history=history, stopped=stopped,
                         skipped_sentences=skipped_total)
    if ckpt_dir is not None:
        _write_index(Path(ckpt_dir), result)
    return result


def _write_index(ckpt_dir: Path, result: TrainResult) -> None:
    index = {
        "best_step": result.best.step,
        "best_valid_ppl": result.best.valid_ppl,
        "latest_step": result.history[-1].step,
        "stopped": result.stopped,
        "skipped_sentences": result.skipped_sentences,
    }
    (ckpt_dir / "index.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    rows = [
        (r.step, f"{r.train_loss:.6f}", f"{r.valid_ppl:.6f}", int(r.is_best), f"{r.wall_time:.3f}")
        for r in result.history
    ]
    (ckpt_dir / "train_log.tsv").write_text(
        tsv_table(("step", "train_loss", "valid_ppl", "is_best", "wall_time"), rows),
        encoding="utf-8",
    )


def fine_tune(
    parent: Checkpoint,
    subword: SubwordModel,
    languages: Sequence[str],
    train_pairs: Sequence[SentencePair],
    valid_pairs: Sequence[SentencePair],
    cfg: TrainConfig,
    ckpt_dir: Path | str | None = None,
) -> TrainResult:
    """Continue optimization from `parent`'s parameters on new data with a
    fresh optimizer and a reduced constant step size; the same early-stopping
    rule applies, and the step-0 baseline guarantees the result is never
    worse than the parent on the new validation set."""
    model = parent.restore_model()
    return train(
        model, subword, languages, train_pairs, valid_pairs, cfg,
        ckpt_dir=ckpt_dir, constant_lr=cfg.fine_tune_lr,
    )
