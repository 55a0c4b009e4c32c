"""Constructed-language corpus suite for self-contained experiments.

Five invented languages share a proto-vocabulary of stems; each language
renders a stem through a deterministic per-character cipher (a vowel
permutation, an optional consonant shift) plus a language suffix, so any
sentence has an exact word-by-word reference translation into every other
language.  The default suffixes give every language a disjoint surface
vocabulary, which makes output-language identification trivial and reliable.

The generated suite mirrors a realistic resource asymmetry: one
high-resource pair, several low-resource pairs, one zero-resource pair
(validation/test only), and two disjoint monolingual sets per language.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Iterable, Mapping, Sequence

from .corpus import (
    CorpusManifest,
    MonoCorpus,
    MonoEntry,
    PairEntry,
    ParallelCorpus,
    SentencePair,
    _seeded_rng,
    save_mono,
    save_parallel,
)
from .errors import ConfigError, DataError

CONSONANTS = "ktpsmnlrvj"
VOWELS = "aeiou"


@dataclass(frozen=True)
class LanguageCipher:
    """Word-level cipher: per-character substitution plus a suffix."""

    vowel_map: tuple[tuple[str, str], ...] = ()
    consonant_map: tuple[tuple[str, str], ...] = ()
    suffix: str = ""

    def mapping(self) -> dict[str, str]:
        return dict(self.vowel_map) | dict(self.consonant_map)

    def apply(self, stem: str) -> str:
        table = self.mapping()
        return "".join(table.get(ch, ch) for ch in stem) + self.suffix

    def validate(self, name: str) -> None:
        for label, pairs in (("vowel", self.vowel_map), ("consonant", self.consonant_map)):
            sources = [a for a, _ in pairs]
            targets = [b for _, b in pairs]
            if len(set(sources)) != len(sources) or len(set(targets)) != len(targets):
                raise ConfigError(f"{name}: {label} map is not bijective")


def default_ciphers() -> dict[str, LanguageCipher]:
    """Relatedness by construction: ta/te/ti differ only in small vowel swaps
    and suffixes (one branch); to/tu add consonant shifts (the other branch).
    Distinct suffixes keep all five surface vocabularies disjoint."""
    return {
        "ta": LanguageCipher(),
        "te": LanguageCipher(vowel_map=(("a", "e"), ("e", "a")), suffix="ne"),
        "ti": LanguageCipher(vowel_map=(("o", "u"), ("u", "o")), suffix="s"),
        "to": LanguageCipher(
            vowel_map=(("a", "o"), ("o", "a"), ("e", "u"), ("u", "e")),
            consonant_map=(("k", "g"), ("t", "d"), ("p", "b")),
            suffix="ga",
        ),
        "tu": LanguageCipher(
            vowel_map=(("a", "u"), ("u", "i"), ("i", "a")),
            consonant_map=(("s", "z"), ("v", "f")),
            suffix="lu",
        ),
    }


def default_relatedness() -> dict[str, tuple[str, ...]]:
    return {
        "ta": ("te", "ti"),
        "te": ("ta", "ti"),
        "ti": ("ta", "te"),
        "to": ("tu",),
        "tu": ("to",),
    }


@dataclass
class ToyLanguageSpec:
    """Desk-scale preset: one 20 000-pair high-resource pair, 500-2 000-pair
    low-resource pairs, 5 000 monolingual lines per language and set."""

    languages: tuple[str, ...] = ("ta", "te", "ti", "to", "tu")
    vocab_size: int = 120
    min_words: int = 3
    max_words: int = 9
    pair_sizes: dict[tuple[str, str], int] = field(default_factory=lambda: {
        ("ta", "te"): 20_000,
        ("ta", "ti"): 2_000,
        ("te", "ti"): 1_000,
        ("ta", "to"): 800,
        ("te", "tu"): 500,
    })
    high_pair: tuple[str, str] = ("ta", "te")
    zero_pair: tuple[str, str] = ("ti", "to")
    valid_per_pair: int = 100
    test_per_pair: int = 200
    mono_lines: int = 5_000
    mono_sets: int = 2
    ciphers: dict[str, LanguageCipher] = field(default_factory=default_ciphers)
    relatedness: dict[str, tuple[str, ...]] = field(default_factory=default_relatedness)

    def validate(self) -> None:
        if len(set(self.languages)) < 2:
            raise ConfigError("need at least 2 languages")
        if not 1 <= self.min_words <= self.max_words:
            raise ConfigError("bad sentence length range")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be at least 2")
        for lang in self.languages:
            if lang not in self.ciphers:
                raise ConfigError(f"no cipher for language {lang!r}")
            self.ciphers[lang].validate(lang)
        declared = set(self.languages)
        for (a, b) in list(self.pair_sizes) + [self.high_pair, self.zero_pair]:
            if a == b or a not in declared or b not in declared:
                raise ConfigError(f"bad pair ({a}, {b})")
        if self.high_pair not in self.pair_sizes:
            raise ConfigError("high_pair must have a size")
        if self.zero_pair in self.pair_sizes:
            raise ConfigError("zero_pair cannot have training data")


def scaled_spec(scale: float, **overrides) -> ToyLanguageSpec:
    """The default suite shrunk by a factor (floor 8 pairs / 20 mono lines),
    for quick runs with the same shape."""
    base = ToyLanguageSpec()
    sizes = {pair: max(8, int(n * scale)) for pair, n in base.pair_sizes.items()}
    fields = dict(
        pair_sizes=sizes,
        valid_per_pair=max(8, int(base.valid_per_pair * scale)),
        test_per_pair=max(8, int(base.test_per_pair * scale)),
        mono_lines=max(20, int(base.mono_lines * scale)),
    )
    fields.update(overrides)
    return ToyLanguageSpec(**fields)


class ToyWorld:
    """Runtime view of a spec under one seed: stems, per-language lexicons,
    exact reference translation, and surface-vocabulary language detection."""

    def __init__(self, spec: ToyLanguageSpec, seed: int):
        spec.validate()
        self.spec = spec
        self.seed = seed
        combos = [c + v for c in CONSONANTS for v in VOWELS]
        stems_space = [a + b for a in combos for b in combos]
        if spec.vocab_size > len(stems_space):
            raise ConfigError(f"vocab_size {spec.vocab_size} exceeds the stem space")
        rng = _seeded_rng("toy-stems", seed)
        self.stems: list[str] = rng.sample(stems_space, spec.vocab_size)
        self.lexicons: dict[str, list[str]] = {}
        self._word_to_stem: dict[str, dict[str, int]] = {}
        for lang in spec.languages:
            lex = [spec.ciphers[lang].apply(stem) for stem in self.stems]
            if len(set(lex)) != len(lex):
                raise ConfigError(f"{lang}: cipher is not bijective over the stems")
            self.lexicons[lang] = lex
            self._word_to_stem[lang] = {w: i for i, w in enumerate(lex)}

    def vocabularies_disjoint(self) -> bool:
        seen: set[str] = set()
        for lex in self.lexicons.values():
            words = set(lex)
            if words & seen:
                return False
            seen |= words
        return True

    def render(self, proto: Sequence[int], lang: str) -> str:
        lex = self.lexicons[lang]
        return " ".join(lex[i] for i in proto)

    def parse(self, text: str, lang: str) -> list[int]:
        table = self._word_to_stem[lang]
        proto = []
        for word in text.split():
            if word not in table:
                raise DataError(f"{word!r} is not a {lang} word")
            proto.append(table[word])
        return proto

    def reference(self, text: str, src_lang: str, tgt_lang: str) -> str:
        return self.render(self.parse(text, src_lang), tgt_lang)

    def detect(self, text: str) -> tuple[str | None, float]:
        return detect_language(
            text, {lang: self._word_to_stem[lang] for lang in self.spec.languages}
        )


def detect_language(
    text: str, lexicons: Mapping[str, Collection[str]]
) -> tuple[str | None, float]:
    """Majority vote by surface-vocabulary membership: returns the best
    language and the fraction of tokens it covers (ties → earlier language
    in the lexicon order; no tokens or no hits → (None, 0.0))."""
    tokens = text.split()
    if not tokens:
        return None, 0.0
    best_lang, best_hits = None, 0
    for lang, lex in lexicons.items():
        vocab = lex if isinstance(lex, (set, frozenset, dict)) else set(lex)
        hits = sum(1 for t in tokens if t in vocab)
        if hits > best_hits:
            best_lang, best_hits = lang, hits
    if best_lang is None:
        return None, 0.0
    return best_lang, best_hits / len(tokens)


def _draw_protos(world: ToyWorld, rng, n: int, seen: set[tuple[int, ...]]) -> list[tuple[int, ...]]:
    spec = world.spec
    out = []
    while len(out) < n:
        length = rng.randint(spec.min_words, spec.max_words)
        proto = tuple(rng.randrange(spec.vocab_size) for _ in range(length))
        if proto in seen:
            continue
        seen.add(proto)
        out.append(proto)
    return out


def generate_toy_suite(
    spec: ToyLanguageSpec, seed: int, out_dir: Path | str
) -> tuple[CorpusManifest, ToyWorld]:
    """Write the full corpus suite and its manifest.  Every sentence across
    all files is a globally unique proto-sentence, so no holdout or
    monolingual line ever appears in any training file."""
    world = ToyWorld(spec, seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = _seeded_rng("toy-data", seed)
    seen: set[tuple[int, ...]] = set()

    def write_pair(src: str, tgt: str, protos: Iterable[tuple[int, ...]],
                   stem_name: str) -> tuple[str, str]:
        pairs = [
            SentencePair(src_lang=src, tgt_lang=tgt,
                         src=world.render(p, src), tgt=world.render(p, tgt))
            for p in protos
        ]
        src_file, tgt_file = f"{stem_name}.{src}", f"{stem_name}.{tgt}"
        save_parallel(ParallelCorpus(direction=(src, tgt), pairs=pairs),
                      out_dir / src_file, out_dir / tgt_file)
        return src_file, tgt_file

    entries: list[PairEntry] = []
    for (src, tgt), n_train in spec.pair_sizes.items():
        key = f"{src}-{tgt}"
        train = write_pair(src, tgt, _draw_protos(world, rng, n_train, seen), f"{key}.train")
        valid = write_pair(src, tgt, _draw_protos(world, rng, spec.valid_per_pair, seen), f"{key}.valid")
        test = write_pair(src, tgt, _draw_protos(world, rng, spec.test_per_pair, seen), f"{key}.test")
        role = "high_resource" if (src, tgt) == spec.high_pair else "low_resource"
        entries.append(PairEntry(src=src, tgt=tgt, role=role,
                                 train=train, valid=valid, test=test))

    zsrc, ztgt = spec.zero_pair
    zkey = f"{zsrc}-{ztgt}"
    zvalid = write_pair(zsrc, ztgt, _draw_protos(world, rng, spec.valid_per_pair, seen), f"{zkey}.valid")
    ztest = write_pair(zsrc, ztgt, _draw_protos(world, rng, spec.test_per_pair, seen), f"{zkey}.test")
    entries.append(PairEntry(src=zsrc, tgt=ztgt, role="zero_resource",
                             train=None, valid=zvalid, test=ztest))

    mono_entries: list[MonoEntry] = []
    for lang in spec.languages:
        for set_id in range(1, spec.mono_sets + 1):
            protos = _draw_protos(world, rng, spec.mono_lines, seen)
            path = f"mono.set{set_id}.{lang}"
            save_mono(MonoCorpus(lang=lang, lines=[world.render(p, lang) for p in protos]),
                      out_dir / path)
            mono_entries.append(MonoEntry(lang=lang, path=path, set_id=set_id))

    manifest = CorpusManifest(languages=list(spec.languages), pairs=entries,
                              mono=mono_entries, base_dir=out_dir)
    manifest.save(out_dir / "manifest.json")
    (out_dir / "lexicons.json").write_text(
        json.dumps({lang: lex for lang, lex in sorted(world.lexicons.items())},
                   indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return manifest, world
