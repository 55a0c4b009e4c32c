"""Parallel/monolingual corpus handling: load, clean, dedup, reverse,
hold-out splitting, down-sampling and multilingual assembly.

Corpus files are UTF-8, one sentence per line, LF endings.  Parallel data
lives either in two aligned files or in a two-column tab-separated file.
All randomness flows from explicit seeds, so every operation here is
reproducible byte-for-byte.
"""

from __future__ import annotations

import enum
import json
import random
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import AlignmentError, ConfigError, DataError, DecodeError


class Origin(str, enum.Enum):
    HUMAN = "human"
    BACK_TRANSLATED = "back_translated"
    FORWARD_TRANSLATED = "forward_translated"


@dataclass(frozen=True)
class SentencePair:
    src_lang: str
    tgt_lang: str
    src: str
    tgt: str
    origin: Origin = Origin.HUMAN

    def __post_init__(self):
        if self.src_lang == self.tgt_lang:
            raise ConfigError(f"pair maps a language onto itself: {self.src_lang}")


@dataclass
class ParallelCorpus:
    direction: tuple[str, str]
    pairs: list[SentencePair] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def key(self) -> str:
        return f"{self.direction[0]}-{self.direction[1]}"


@dataclass
class MonoCorpus:
    lang: str
    lines: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.lines)


@dataclass(frozen=True)
class CleaningConfig:
    """Hygiene rules: the sources only say that cleaning happened, so these
    are standard bitext filters with permissive defaults."""

    max_len_words: int = 200
    len_ratio_max: float = 9.0
    normalize_unicode: bool = True

    def __post_init__(self):
        if self.max_len_words <= 0:
            raise ConfigError("max_len_words must be positive")
        if self.len_ratio_max < 1:
            raise ConfigError("len_ratio_max must be >= 1")


@dataclass(frozen=True)
class SplitSpec:
    test_total: int
    valid_total: int
    seed: int = 0


@dataclass
class DedupCounts:
    before: int
    after: int
    eliminated: int


@dataclass
class CleanCounts:
    before: int
    after: int
    empty_side: int = 0
    too_long: int = 0
    ratio: int = 0

    @property
    def removed(self) -> int:
        return self.empty_side + self.too_long + self.ratio


@dataclass
class HoldoutSplit:
    train: ParallelCorpus
    valid: ParallelCorpus
    test: ParallelCorpus


def _read_lines(path: Path | str) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError(f"{path} is not valid UTF-8 at byte offset {e.start}") from e
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def load_mono(path: Path | str, lang: str) -> MonoCorpus:
    """Read one-sentence-per-line text; trims lines, drops empty ones."""
    lines = [line.strip() for line in _read_lines(path)]
    return MonoCorpus(lang=lang, lines=[line for line in lines if line])


def save_mono(corpus: MonoCorpus, path: Path | str) -> None:
    Path(path).write_text("".join(line + "\n" for line in corpus.lines), encoding="utf-8")


def load_parallel(
    src_path: Path | str, tgt_path: Path | str, direction: tuple[str, str]
) -> ParallelCorpus:
    """Read two aligned files; line i of each forms pair i (origin human)."""
    src_lines = _read_lines(src_path)
    tgt_lines = _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise AlignmentError(
            f"aligned files disagree: {src_path} has {len(src_lines)} lines, "
            f"{tgt_path} has {len(tgt_lines)}"
        )
    src_lang, tgt_lang = direction
    pairs = [
        SentencePair(src_lang, tgt_lang, s.strip(), t.strip())
        for s, t in zip(src_lines, tgt_lines)
    ]
    return ParallelCorpus(direction=direction, pairs=pairs)


def load_parallel_tsv(path: Path | str, direction: tuple[str, str]) -> ParallelCorpus:
    """Read a two-column tab-separated file (src TAB tgt per line)."""
    src_lang, tgt_lang = direction
    pairs = []
    for i, line in enumerate(_read_lines(path)):
        cols = line.split("\t")
        if len(cols) != 2:
            raise DataError(f"{path}:{i + 1}: expected 2 tab-separated columns, got {len(cols)}")
        pairs.append(SentencePair(src_lang, tgt_lang, cols[0].strip(), cols[1].strip()))
    return ParallelCorpus(direction=direction, pairs=pairs)


def save_parallel(corpus: ParallelCorpus, src_path: Path | str, tgt_path: Path | str) -> None:
    Path(src_path).write_text("".join(p.src + "\n" for p in corpus.pairs), encoding="utf-8")
    Path(tgt_path).write_text("".join(p.tgt + "\n" for p in corpus.pairs), encoding="utf-8")


def _dedup_key(pair: SentencePair) -> tuple[str, str]:
    return (
        unicodedata.normalize("NFC", pair.src.strip()),
        unicodedata.normalize("NFC", pair.tgt.strip()),
    )


def dedup(corpus: ParallelCorpus) -> tuple[ParallelCorpus, DedupCounts]:
    """Drop exact repeats of a (src, tgt) pair, keeping first occurrences."""
    seen: set[tuple[str, str]] = set()
    kept = []
    for pair in corpus.pairs:
        key = _dedup_key(pair)
        if key in seen:
            continue
        seen.add(key)
        kept.append(pair)
    counts = DedupCounts(before=len(corpus), after=len(kept), eliminated=len(corpus) - len(kept))
    return ParallelCorpus(corpus.direction, kept), counts


def clean(corpus: ParallelCorpus, cfg: CleaningConfig) -> tuple[ParallelCorpus, CleanCounts]:
    """Filter pairs by emptiness, length and length ratio; counts per rule."""
    counts = CleanCounts(before=len(corpus), after=0)
    kept = []
    for pair in corpus.pairs:
        src, tgt = pair.src.strip(), pair.tgt.strip()
        if cfg.normalize_unicode:
            src = unicodedata.normalize("NFC", src)
            tgt = unicodedata.normalize("NFC", tgt)
        if not src or not tgt:
            counts.empty_side += 1
            continue
        n_src, n_tgt = len(src.split()), len(tgt.split())
        if n_src > cfg.max_len_words or n_tgt > cfg.max_len_words:
            counts.too_long += 1
            continue
        if max(n_src, n_tgt) / min(n_src, n_tgt) > cfg.len_ratio_max:
            counts.ratio += 1
            continue
        kept.append(replace(pair, src=src, tgt=tgt))
    counts.after = len(kept)
    return ParallelCorpus(corpus.direction, kept), counts


def reverse(corpus: ParallelCorpus) -> ParallelCorpus:
    """Swap source and target on every pair (text and language)."""
    flipped = [
        SentencePair(p.tgt_lang, p.src_lang, p.tgt, p.src, origin=p.origin)
        for p in corpus.pairs
    ]
    return ParallelCorpus((corpus.direction[1], corpus.direction[0]), flipped)


def largest_remainder(sizes: Sequence[int], total: int) -> list[int]:
    """Apportion `total` proportionally to `sizes` so quotas sum exactly.

    Floors the exact shares, then hands remaining units to the largest
    fractional remainders (ties to the earlier corpus).
    """
    grand = sum(sizes)
    if total < 0:
        raise ConfigError("cannot apportion a negative total")
    if grand == 0:
        if total > 0:
            raise ConfigError("cannot apportion a positive total over empty corpora")
        return [0] * len(sizes)
    exact = [size * total / grand for size in sizes]
    quotas = [int(x) for x in exact]
    leftovers = total - sum(quotas)
    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - quotas[i]), i))
    for i in order[:leftovers]:
        quotas[i] += 1
    return quotas


def _seeded_rng(*parts) -> random.Random:
    return random.Random(":".join(str(p) for p in parts))


def split_holdout(corpora: Sequence[ParallelCorpus], spec: SplitSpec) -> list[HoldoutSplit]:
    """Hold validation/test sentences out of each corpus.

    Per-corpus quotas are proportional to the corpus share of the global
    pair count (largest-remainder rounding, so they sum exactly to the
    requested totals); selection is uniform at random under the seed.
    """
    sizes = [len(c) for c in corpora]
    test_quotas = largest_remainder(sizes, spec.test_total)
    valid_quotas = largest_remainder(sizes, spec.valid_total)
    splits = []
    for corpus, n_test, n_valid in zip(corpora, test_quotas, valid_quotas):
        if n_test + n_valid > len(corpus):
            raise ConfigError(
                f"hold-out quota {n_test}+{n_valid} exceeds corpus {corpus.key} "
                f"of size {len(corpus)}"
            )
        rng = _seeded_rng("split", spec.seed, corpus.key)
        drawn = rng.sample(range(len(corpus)), n_test + n_valid)
        test_idx = set(drawn[:n_test])
        valid_idx = set(drawn[n_test:])
        train, valid, test = [], [], []
        for i, pair in enumerate(corpus.pairs):
            if i in test_idx:
                test.append(pair)
            elif i in valid_idx:
                valid.append(pair)
            else:
                train.append(pair)
        splits.append(
            HoldoutSplit(
                train=ParallelCorpus(corpus.direction, train),
                valid=ParallelCorpus(corpus.direction, valid),
                test=ParallelCorpus(corpus.direction, test),
            )
        )
    return splits


def downsample(corpus: MonoCorpus, n: int, seed: int) -> MonoCorpus:
    """Uniform sample without replacement of size n, original order kept."""
    if n < 0:
        raise ConfigError("downsample size must be >= 0")
    if len(corpus) <= n:
        return corpus
    rng = _seeded_rng("downsample", seed, corpus.lang)
    idx = sorted(rng.sample(range(len(corpus)), n))
    return MonoCorpus(corpus.lang, [corpus.lines[i] for i in idx])


def build_multilingual(corpora: Sequence[ParallelCorpus]) -> list[ParallelCorpus]:
    """Each input corpus plus its reverse, covering both directions."""
    seen: set[frozenset] = set()
    for c in corpora:
        unordered = frozenset(c.direction)
        if unordered in seen:
            raise ConfigError(f"duplicate language pair: {c.key}")
        seen.add(unordered)
    out = []
    for c in corpora:
        out.append(c)
        out.append(reverse(c))
    return out


# --- manifest ---------------------------------------------------------------


@dataclass
class PairEntry:
    """One language pair in a manifest; file paths are manifest-relative.

    A zero-resource pair has valid/test files but no training files.
    """

    src: str
    tgt: str
    role: str = "low_resource"  # high_resource | low_resource | zero_resource
    train: tuple[str, str] | None = None
    valid: tuple[str, str] | None = None
    test: tuple[str, str] | None = None

    @property
    def key(self) -> str:
        return f"{self.src}-{self.tgt}"


@dataclass
class MonoEntry:
    lang: str
    path: str
    set_id: int = 1  # monolingual collection the file belongs to (1 or 2)


@dataclass
class CorpusManifest:
    """Declares the experiment's languages and where their data lives."""

    languages: list[str]
    pairs: list[PairEntry]
    mono: list[MonoEntry] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        known = set(self.languages)
        for entry in self.pairs:
            if entry.src not in known or entry.tgt not in known:
                raise ConfigError(f"pair {entry.key} uses undeclared language")
        for entry in self.mono:
            if entry.lang not in known:
                raise ConfigError(f"monolingual entry uses undeclared language {entry.lang}")

    def pair(self, src: str, tgt: str) -> PairEntry:
        for entry in self.pairs:
            if entry.src == src and entry.tgt == tgt:
                return entry
        raise ConfigError(f"manifest has no pair {src}-{tgt}")

    def _resolve(self, rel: str) -> Path:
        return self.base_dir / rel

    def load_split(self, entry: PairEntry, split: str) -> ParallelCorpus:
        files = getattr(entry, split)
        if files is None:
            raise DataError(f"pair {entry.key} has no {split} files")
        return load_parallel(
            self._resolve(files[0]), self._resolve(files[1]), (entry.src, entry.tgt)
        )

    def load_mono(self, entry: MonoEntry) -> MonoCorpus:
        return load_mono(self._resolve(entry.path), entry.lang)

    def mono_for(self, lang: str, set_id: int | None = None) -> list[MonoEntry]:
        return [
            m for m in self.mono if m.lang == lang and (set_id is None or m.set_id == set_id)
        ]

    def to_dict(self) -> dict:
        return {
            "languages": list(self.languages),
            "pairs": [
                {
                    "src": p.src,
                    "tgt": p.tgt,
                    "role": p.role,
                    **({"train": list(p.train)} if p.train else {}),
                    **({"valid": list(p.valid)} if p.valid else {}),
                    **({"test": list(p.test)} if p.test else {}),
                }
                for p in self.pairs
            ],
            "mono": [{"lang": m.lang, "path": m.path, "set": m.set_id} for m in self.mono],
        }

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "CorpusManifest":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        pairs = [
            PairEntry(
                src=p["src"],
                tgt=p["tgt"],
                role=p.get("role", "low_resource"),
                train=tuple(p["train"]) if "train" in p else None,
                valid=tuple(p["valid"]) if "valid" in p else None,
                test=tuple(p["test"]) if "test" in p else None,
            )
            for p in data["pairs"]
        ]
        mono = [
            MonoEntry(lang=m["lang"], path=m["path"], set_id=m.get("set", 1))
            for m in data.get("mono", [])
        ]
        return cls(
            languages=list(data["languages"]), pairs=pairs, mono=mono, base_dir=path.parent
        )


def tsv_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = ["\t".join(str(c) for c in header)]
    lines.extend("\t".join(str(c) for c in row) for row in rows)
    return "\n".join(lines) + "\n"
