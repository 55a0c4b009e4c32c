"""Synthetic parallel data: back-/forward-translation of monolingual text
with per-target share planning, merging with human data, and the
second-iteration regeneration step.

One translation pass serves both synthetic views of a line: the
back-translation pair puts the machine output on the source side and the
human line on the target side; the forward-translation pair is the same
strings in the opposite direction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .checkpoint import Checkpoint, fingerprint_checkpoint
from .corpus import (
    MonoCorpus,
    Origin,
    ParallelCorpus,
    SentencePair,
    _seeded_rng,
    load_parallel,
    save_parallel,
)
from .decoding import beam_translate, factor_index, greedy_translate_batch
from .errors import ConfigError, DataError
from .subword import SubwordModel

log = logging.getLogger(__name__)

EQUAL_SHARES = "equal_shares"
UNIFORM_RANDOM = "uniform_random"
MAX_SKIP_FRACTION = 0.10


@dataclass(frozen=True)
class SharePlan:
    """Target-language assignment for every line of one monolingual corpus."""

    lang: str
    assignments: tuple[str, ...]
    mode: str
    seed: int

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for tgt in self.assignments:
            out[tgt] = out.get(tgt, 0) + 1
        return dict(sorted(out.items()))

    def __len__(self) -> int:
        return len(self.assignments)


@dataclass
class SyntheticCorpus:
    pairs: list[SentencePair]
    generator_id: str
    iteration: int
    mode: str
    seed: int
    source_lang: str = ""
    dropped: int = 0  # empty machine translations
    failed: int = 0   # decode errors

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class MergedTraining:
    """Concatenation of human and synthetic pairs with per-direction counts."""

    pairs: list[SentencePair]
    counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairs)


def plan_shares(
    mono: MonoCorpus, languages: Sequence[str], mode: str, seed: int
) -> SharePlan:
    """Assign every line a target drawn from the other languages: either an
    even split (counts differ by at most 1, remainder to the first targets in
    sorted language order) or an independent uniform draw per line."""
    if len(set(languages)) < 2:
        raise ConfigError("share planning needs at least 2 languages")
    if mono.lang not in languages:
        raise ConfigError(f"monolingual language {mono.lang!r} is not in the language set")
    targets = sorted(l for l in set(languages) if l != mono.lang)
    rng = _seeded_rng("shares", seed, mono.lang, mode)
    n, k = len(mono.lines), len(targets)
    if mode == EQUAL_SHARES:
        pool: list[str] = []
        for i, tgt in enumerate(targets):
            pool.extend([tgt] * (n // k + (1 if i < n % k else 0)))
        rng.shuffle(pool)
        assignments = tuple(pool)
    elif mode == UNIFORM_RANDOM:
        assignments = tuple(rng.choice(targets) for _ in range(n))
    else:
        raise ConfigError(f"unknown share mode {mode!r}")
    return SharePlan(lang=mono.lang, assignments=assignments, mode=mode, seed=seed)


def generate(
    generator: Checkpoint,
    subword: SubwordModel,
    languages: Sequence[str],
    mono: MonoCorpus,
    plan: SharePlan,
    iteration: int = 1,
    include_forward: bool = True,
    mode: str = "greedy",
    beam_size: int = 5,
    max_len: int | None = None,
) -> SyntheticCorpus:
    """Translate each line into its planned target and pair machine output
    with the human line in both directions.  Lines whose translation is empty
    are dropped and counted; if more than 10% of the planned lines produce no
    usable pair, the corpus is considered unusable and a DataError is raised.
    """
    if plan.lang != mono.lang or len(plan) != len(mono.lines):
        raise ConfigError("share plan does not match the monolingual corpus")
    needed = sorted(set(plan.assignments))
    model = generator.restore_model()
    for tgt in needed:
        if factor_index(languages, tgt) >= model.cfg.factor_vocab:
            raise ConfigError(
                f"factor vocabulary ({model.cfg.factor_vocab}) does not cover "
                f"target {tgt!r}"
            )
    by_target: dict[str, list[int]] = {t: [] for t in needed}
    for i, tgt in enumerate(plan.assignments):
        by_target[tgt].append(i)

    translations: dict[int, str] = {}
    failed = 0
    for tgt, idxs in by_target.items():
        texts = [mono.lines[i] for i in idxs]
        factor = factor_index(languages, tgt)
        if mode == "beam":
            for i, text in zip(idxs, texts):
                try:
                    translations[i] = beam_translate(
                        model, subword, text, factor,
                        beam_size=beam_size, max_len=max_len,
                    ).text
                except Exception:
                    failed += 1
                    log.warning("dropping line %d (%s→%s): decoding failed",
                                i, mono.lang, tgt)
        else:
            try:
                results = greedy_translate_batch(model, subword, texts, factor,
                                                 max_len=max_len)
                for i, res in zip(idxs, results):
                    translations[i] = res.text
            except Exception:
                # Retry line by line so a single bad input only loses itself.
                for i, text in zip(idxs, texts):
                    try:
                        res = greedy_translate_batch(model, subword, [text], factor,
                                                     max_len=max_len)[0]
                        translations[i] = res.text
                    except Exception:
                        failed += 1
                        log.warning("dropping line %d (%s→%s): decoding failed",
                                    i, mono.lang, tgt)

    bt_pairs: list[SentencePair] = []
    ft_pairs: list[SentencePair] = []
    dropped = 0
    for i, tgt in enumerate(plan.assignments):
        machine = translations.get(i, "").strip()
        human = mono.lines[i]
        if i in translations and not machine:
            dropped += 1
            continue
        if i not in translations:
            continue
        bt_pairs.append(SentencePair(
            src_lang=tgt, tgt_lang=mono.lang, src=machine, tgt=human,
            origin=Origin.BACK_TRANSLATED,
        ))
        if include_forward:
            ft_pairs.append(SentencePair(
                src_lang=mono.lang, tgt_lang=tgt, src=human, tgt=machine,
                origin=Origin.FORWARD_TRANSLATED,
            ))
    unusable = dropped + failed
    if len(plan) and unusable > MAX_SKIP_FRACTION * len(plan):
        raise DataError(
            f"synthetic generation for {mono.lang!r} lost {unusable} of "
            f"{len(plan)} lines ({dropped} empty, {failed} failed)"
        )
    return SyntheticCorpus(
        pairs=bt_pairs + ft_pairs,
        generator_id=fingerprint_checkpoint(generator),
        iteration=iteration,
        mode=plan.mode,
        seed=plan.seed,
        source_lang=mono.lang,
        dropped=dropped,
        failed=failed,
    )


def merge(
    human: Sequence[ParallelCorpus], synthetic: Sequence[SyntheticCorpus]
) -> MergedTraining:
    """Concatenate human and synthetic pairs, preserving origin tags, and
    tally human/synthetic counts per direction."""
    pairs: list[SentencePair] = []
    counts: dict[str, dict[str, int]] = {}

    def bump(direction: str, kind: str, n: int = 1) -> None:
        row = counts.setdefault(direction, {"human": 0, "synthetic": 0})
        row[kind] += n

    for corpus in human:
        pairs.extend(corpus.pairs)
        bump(corpus.key, "human", len(corpus.pairs))
    for corpus in synthetic:
        for p in corpus.pairs:
            pairs.append(p)
            bump(f"{p.src_lang}-{p.tgt_lang}", "synthetic")
    return MergedTraining(pairs=pairs, counts=counts)


def second_iteration_mono(
    first: MonoCorpus, second: MonoCorpus, seed: int
) -> MonoCorpus:
    """The iteration-2 input: the first monolingual set reshuffled under the
    seed, followed by the fresh second set."""
    if first.lang != second.lang:
        raise ConfigError(
            f"monolingual sets disagree on language: {first.lang!r} vs {second.lang!r}"
        )
    lines = list(first.lines)
    _seeded_rng("bt2-shuffle", seed, first.lang).shuffle(lines)
    return MonoCorpus(lang=first.lang, lines=lines + list(second.lines))


def iterate(
    generator: Checkpoint,
    subword: SubwordModel,
    languages: Sequence[str],
    first_sets: Sequence[MonoCorpus],
    second_sets: Sequence[MonoCorpus],
    mode: str,
    seed: int,
    include_forward: bool = True,
    decode_mode: str = "greedy",
    max_len: int | None = None,
) -> list[SyntheticCorpus]:
    """Second-round generation: for each language, re-plan shares over the
    reshuffled first set plus the second set and translate with the given
    (iteration-1) generator checkpoint."""
    by_lang = {m.lang: m for m in second_sets}
    out = []
    for first in first_sets:
        if first.lang not in by_lang:
            raise DataError(f"no second monolingual set for language {first.lang!r}")
        combined = second_iteration_mono(first, by_lang[first.lang], seed)
        plan = plan_shares(combined, languages, mode, seed + 1)
        out.append(generate(
            generator, subword, languages, combined, plan,
            iteration=2, include_forward=include_forward,
            mode=decode_mode, max_len=max_len,
        ))
    return out


def save_synthetic(corpus: SyntheticCorpus, directory: Path | str) -> None:
    """Write pairs in the two-file parallel format (one file per direction)
    plus a provenance sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    by_direction: dict[str, list[SentencePair]] = {}
    for p in corpus.pairs:
        by_direction.setdefault(f"{p.src_lang}-{p.tgt_lang}", []).append(p)
    for direction, pairs in sorted(by_direction.items()):
        src_lang, tgt_lang = direction.split("-")
        save_parallel(
            ParallelCorpus(direction=(src_lang, tgt_lang), pairs=pairs),
            directory / f"synthetic.{direction}.{src_lang}",
            directory / f"synthetic.{direction}.{tgt_lang}",
        )
    sidecar = {
        "generator_id": corpus.generator_id,
        "iteration": corpus.iteration,
        "mode": corpus.mode,
        "seed": corpus.seed,
        "source_lang": corpus.source_lang,
        "dropped": corpus.dropped,
        "failed": corpus.failed,
        "directions": {d: len(ps) for d, ps in sorted(by_direction.items())},
    }
    (directory / "provenance.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_synthetic(directory: Path | str) -> SyntheticCorpus:
    """Rebuild a saved synthetic corpus; a pair whose target side is the
    human monolingual language is a back-translation, the mirror direction a
    forward-translation."""
    directory = Path(directory)
    sidecar_path = directory / "provenance.json"
    if not sidecar_path.exists():
        raise DataError(f"no synthetic corpus provenance at {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    source_lang = sidecar["source_lang"]
    pairs: list[SentencePair] = []
    for direction, count in sorted(sidecar["directions"].items()):
        src_lang, tgt_lang = direction.split("-")
        origin = Origin.BACK_TRANSLATED if tgt_lang == source_lang else Origin.FORWARD_TRANSLATED
        loaded = load_parallel(
            directory / f"synthetic.{direction}.{src_lang}",
            directory / f"synthetic.{direction}.{tgt_lang}",
            (src_lang, tgt_lang),
        )
        if len(loaded.pairs) != count:
            raise DataError(
                f"{directory}: direction {direction} has {len(loaded.pairs)} pairs, "
                f"provenance says {count}"
            )
        pairs.extend(replace(p, origin=origin) for p in loaded.pairs)
    return SyntheticCorpus(
        pairs=pairs,
        generator_id=sidecar["generator_id"],
        iteration=sidecar["iteration"],
        mode=sidecar["mode"],
        seed=sidecar["seed"],
        source_lang=source_lang,
        dropped=sidecar["dropped"],
        failed=sidecar["failed"],
    )
