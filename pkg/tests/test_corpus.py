import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowmt.corpus import (
    CleaningConfig,
    CorpusManifest,
    MonoCorpus,
    MonoEntry,
    Origin,
    PairEntry,
    ParallelCorpus,
    SentencePair,
    SplitSpec,
    build_multilingual,
    clean,
    dedup,
    downsample,
    largest_remainder,
    load_mono,
    load_parallel,
    load_parallel_tsv,
    reverse,
    save_mono,
    save_parallel,
    split_holdout,
)
from lowmt.errors import AlignmentError, ConfigError, DataError, DecodeError


def pc(direction, rows, origin=Origin.HUMAN):
    src_lang, tgt_lang = direction
    return ParallelCorpus(
        direction, [SentencePair(src_lang, tgt_lang, s, t, origin) for s, t in rows]
    )


TEXT = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\n\r"),
    max_size=8,
)
ROWS = st.lists(st.tuples(TEXT, TEXT), max_size=30)


# --- loading ----------------------------------------------------------------


def test_load_mono_drops_empty_lines(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("a\n\nb\n", encoding="utf-8")
    assert load_mono(path, "xx").lines == ["a", "b"]


def test_load_mono_empty_file(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("", encoding="utf-8")
    assert load_mono(path, "xx").lines == []


def test_load_mono_trims(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("  a \nb\t\n", encoding="utf-8")
    assert load_mono(path, "xx").lines == ["a", "b"]


def test_load_mono_bad_utf8_names_offset(tmp_path):
    path = tmp_path / "m.txt"
    path.write_bytes(b"ok\n\xff\n")
    with pytest.raises(DecodeError, match="byte offset 3"):
        load_mono(path, "xx")


def test_load_mono_missing_file():
    with pytest.raises(DataError, match="not found"):
        load_mono("/nonexistent/m.txt", "xx")


def test_load_parallel_single_pair(tmp_path):
    (tmp_path / "s").write_text("x\n", encoding="utf-8")
    (tmp_path / "t").write_text("y\n", encoding="utf-8")
    c = load_parallel(tmp_path / "s", tmp_path / "t", ("aa", "bb"))
    assert len(c) == 1
    assert (c.pairs[0].src, c.pairs[0].tgt) == ("x", "y")
    assert c.pairs[0].origin is Origin.HUMAN


def test_load_parallel_length_mismatch(tmp_path):
    (tmp_path / "s").write_text("x\nx2\n", encoding="utf-8")
    (tmp_path / "t").write_text("y\n", encoding="utf-8")
    with pytest.raises(AlignmentError, match="2 lines.*1"):
        load_parallel(tmp_path / "s", tmp_path / "t", ("aa", "bb"))


def test_parallel_round_trip(tmp_path):
    c = pc(("aa", "bb"), [("tere", "tereq"), ("üks kaks", "ütsq katsq")])
    save_parallel(c, tmp_path / "s", tmp_path / "t")
    again = load_parallel(tmp_path / "s", tmp_path / "t", ("aa", "bb"))
    assert again == c


def test_load_parallel_tsv(tmp_path):
    (tmp_path / "p.tsv").write_text("x\ty\nx2\ty2\n", encoding="utf-8")
    c = load_parallel_tsv(tmp_path / "p.tsv", ("aa", "bb"))
    assert [(p.src, p.tgt) for p in c.pairs] == [("x", "y"), ("x2", "y2")]


def test_load_parallel_tsv_bad_columns(tmp_path):
    (tmp_path / "p.tsv").write_text("x\ty\tz\n", encoding="utf-8")
    with pytest.raises(DataError, match="p.tsv:1"):
        load_parallel_tsv(tmp_path / "p.tsv", ("aa", "bb"))


def test_mono_round_trip(tmp_path):
    m = MonoCorpus("xx", ["tere", "ütsq katsq"])
    save_mono(m, tmp_path / "m.txt")
    assert load_mono(tmp_path / "m.txt", "xx") == m


def test_pair_rejects_same_language():
    with pytest.raises(ConfigError):
        SentencePair("aa", "aa", "x", "y")


# --- dedup ------------------------------------------------------------------


def test_dedup_removes_exact_repeats():
    c = pc(("aa", "bb"), [("a", "b"), ("a", "b"), ("a", "c")])
    out, counts = dedup(c)
    assert [(p.src, p.tgt) for p in out.pairs] == [("a", "b"), ("a", "c")]
    assert (counts.before, counts.after, counts.eliminated) == (3, 2, 1)


def test_dedup_no_duplicates_is_identity():
    c = pc(("aa", "bb"), [("a", "b"), ("a", "c")])
    out, counts = dedup(c)
    assert out == c
    assert counts.eliminated == 0


@settings(max_examples=1000, deadline=None)
@given(ROWS)
def test_dedup_idempotent_and_accounting(rows):
    c = pc(("aa", "bb"), rows)
    once, counts = dedup(c)
    twice, counts2 = dedup(once)
    assert twice == once
    assert counts2.eliminated == 0
    assert len(once) <= len(c)
    assert counts.eliminated == counts.before - counts.after


# --- clean ------------------------------------------------------------------


def test_clean_removes_empty_side():
    c = pc(("aa", "bb"), [("a b c", ""), ("a", "b")])
    out, counts = clean(c, CleaningConfig())
    assert len(out) == 1
    assert counts.empty_side == 1


def test_clean_length_rule():
    c = pc(("aa", "bb"), [("a b c d", "x"), ("a b c", "x")])
    out, counts = clean(c, CleaningConfig(max_len_words=3, len_ratio_max=9.0))
    assert [(p.src, p.tgt) for p in out.pairs] == [("a b c", "x")]
    assert counts.too_long == 1


def test_clean_ratio_rule():
    c = pc(("aa", "bb"), [("a", "x y z"), ("a b", "x y z")])
    out, counts = clean(c, CleaningConfig(len_ratio_max=2))
    assert [(p.src, p.tgt) for p in out.pairs] == [("a b", "x y z")]
    assert counts.ratio == 1


@settings(max_examples=200, deadline=None)
@given(ROWS)
def test_clean_counts_sum(rows):
    c = pc(("aa", "bb"), rows)
    out, counts = clean(c, CleaningConfig(max_len_words=3, len_ratio_max=2))
    assert counts.removed == counts.before - counts.after
    assert counts.after == len(out)


def test_cleaning_config_validation():
    with pytest.raises(ConfigError):
        CleaningConfig(max_len_words=0)
    with pytest.raises(ConfigError):
        CleaningConfig(len_ratio_max=0.5)


# --- reverse ----------------------------------------------------------------


def test_reverse_swaps_text_and_languages():
    c = pc(("et", "vro"), [("tere", "tereq")])
    r = reverse(c)
    assert r.direction == ("vro", "et")
    assert (r.pairs[0].src, r.pairs[0].tgt) == ("tereq", "tere")
    assert (r.pairs[0].src_lang, r.pairs[0].tgt_lang) == ("vro", "et")


def test_reverse_preserves_origin():
    c = pc(("aa", "bb"), [("m", "h")], origin=Origin.BACK_TRANSLATED)
    assert reverse(c).pairs[0].origin is Origin.BACK_TRANSLATED


@settings(max_examples=1000, deadline=None)
@given(ROWS)
def test_reverse_involution(rows):
    c = pc(("aa", "bb"), rows)
    assert reverse(reverse(c)) == c
    assert len(reverse(c)) == len(c)


# --- split_holdout ----------------------------------------------------------


def test_largest_remainder_exact_proportion():
    assert largest_remainder([90, 10], 10) == [9, 1]


def test_largest_remainder_fractional():
    assert largest_remainder([60, 25, 15], 10) == [6, 3, 1]


def test_largest_remainder_zero_total():
    assert largest_remainder([5, 5], 0) == [0, 0]


def test_largest_remainder_empty_corpora():
    assert largest_remainder([0, 0], 0) == [0, 0]
    with pytest.raises(ConfigError):
        largest_remainder([0, 0], 3)


def test_split_zero_totals_keep_everything():
    c = pc(("aa", "bb"), [("a", "b"), ("c", "d")])
    (split,) = split_holdout([c], SplitSpec(test_total=0, valid_total=0))
    assert split.train == c
    assert len(split.valid) == 0 and len(split.test) == 0


def test_split_quota_exceeds_corpus():
    small = pc(("aa", "bb"), [("a", "b")])
    with pytest.raises(ConfigError, match="aa-bb"):
        split_holdout([small], SplitSpec(test_total=1, valid_total=1))


def test_split_deterministic_bytes(tmp_path):
    rows = [(f"s{i}", f"t{i}") for i in range(50)]
    c = pc(("aa", "bb"), rows)
    spec = SplitSpec(test_total=10, valid_total=5, seed=7)
    for tag in ("one", "two"):
        (split,) = split_holdout([c], spec)
        save_parallel(split.test, tmp_path / f"{tag}.s", tmp_path / f"{tag}.t")
    assert (tmp_path / "one.s").read_bytes() == (tmp_path / "two.s").read_bytes()
    assert (tmp_path / "one.t").read_bytes() == (tmp_path / "two.t").read_bytes()


def test_downsample_deterministic_bytes(tmp_path):
    m = MonoCorpus("xx", [f"line {i}" for i in range(100)])
    for tag in ("one", "two"):
        save_mono(downsample(m, 30, seed=5), tmp_path / f"{tag}.txt")
    assert (tmp_path / "one.txt").read_bytes() == (tmp_path / "two.txt").read_bytes()


@settings(max_examples=1000, deadline=None)
@given(st.data())
def test_split_partitions_and_quota_sums(data):
    n_corpora = data.draw(st.integers(1, 5))
    sizes = [data.draw(st.integers(4, 30)) for _ in range(n_corpora)]
    grand = sum(sizes)
    test_total = data.draw(st.integers(0, grand // 4))
    valid_total = data.draw(st.integers(0, grand // 4))
    seed = data.draw(st.integers(0, 10))
    corpora = [
        pc(("aa", "bb"), [(f"s{k}.{i}", f"t{k}.{i}") for i in range(size)])
        for k, size in enumerate(sizes)
    ]
    splits = split_holdout(corpora, SplitSpec(test_total, valid_total, seed))
    assert sum(len(s.test) for s in splits) == test_total
    assert sum(len(s.valid) for s in splits) == valid_total
    for corpus, split in zip(corpora, splits):
        parts = [split.train.pairs, split.valid.pairs, split.test.pairs]
        as_sets = [set((p.src, p.tgt) for p in part) for part in parts]
        assert sum(len(s) for s in as_sets) == sum(len(p) for p in parts)  # no dups inside
        assert as_sets[0] | as_sets[1] | as_sets[2] == set((p.src, p.tgt) for p in corpus.pairs)
        assert not (as_sets[0] & as_sets[1] or as_sets[0] & as_sets[2] or as_sets[1] & as_sets[2])


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=1, max_size=8), st.integers(0, 100))
def test_largest_remainder_sums_exactly(sizes, total):
    if sum(sizes) == 0:
        return
    quotas = largest_remainder(sizes, total)
    assert sum(quotas) == total
    assert all(q >= 0 for q in quotas)
    for size, quota in zip(sizes, quotas):
        exact = size * total / sum(sizes)
        assert exact - 1 < quota < exact + 1 or quota in (int(exact), int(exact) + 1)


def test_split_same_seed_same_result():
    corpora = [
        pc(("aa", "bb"), [(f"s{i}", f"t{i}") for i in range(40)]),
        pc(("aa", "cc"), [(f"u{i}", f"v{i}") for i in range(20)]),
    ]
    spec = SplitSpec(test_total=12, valid_total=6, seed=3)
    first = split_holdout(corpora, spec)
    second = split_holdout(corpora, spec)
    assert first == second
    different = split_holdout(corpora, SplitSpec(test_total=12, valid_total=6, seed=4))
    assert first != different


# --- downsample -------------------------------------------------------------


def test_downsample_small_corpus_unchanged():
    m = MonoCorpus("xx", [f"{i}" for i in range(5)])
    assert downsample(m, 10, seed=0) is m


def test_downsample_exact_size_unchanged():
    m = MonoCorpus("xx", [f"{i}" for i in range(100)])
    assert downsample(m, 100, seed=0) is m


def test_downsample_preserves_order():
    m = MonoCorpus("xx", [f"{i:03d}" for i in range(200)])
    out = downsample(m, 50, seed=1)
    assert len(out) == 50
    assert out.lines == sorted(out.lines)
    assert set(out.lines) < set(m.lines)


# --- build_multilingual -----------------------------------------------------


def test_build_multilingual_doubles():
    c = pc(("aa", "bb"), [("x", "y")])
    out = build_multilingual([c])
    assert len(out) == 2
    assert out[0].direction == ("aa", "bb")
    assert out[1].direction == ("bb", "aa")
    assert sum(len(c) for c in out) == 2 * len(c)


def test_build_multilingual_five_pairs():
    pairs = [("et", "fi"), ("et", "vro"), ("fi", "sme"), ("fi", "sma"), ("sme", "sma")]
    corpora = [pc(d, [("x", "y")]) for d in pairs]
    out = build_multilingual(corpora)
    assert len(out) == 10
    assert len({c.key for c in out}) == 10


def test_build_multilingual_rejects_duplicate_unordered_pair():
    with pytest.raises(ConfigError, match="bb-aa"):
        build_multilingual([pc(("aa", "bb"), [("x", "y")]), pc(("bb", "aa"), [("y", "x")])])


# --- manifest ---------------------------------------------------------------


def test_manifest_round_trip(tmp_path):
    manifest = CorpusManifest(
        languages=["aa", "bb", "cc"],
        pairs=[
            PairEntry("aa", "bb", role="high_resource", train=("ab.a", "ab.b"),
                      valid=("v.a", "v.b"), test=("t.a", "t.b")),
            PairEntry("aa", "cc", role="zero_resource", test=("z.a", "z.c")),
        ],
        mono=[MonoEntry("bb", "mono.bb", set_id=2)],
    )
    manifest.save(tmp_path / "manifest.json")
    loaded = CorpusManifest.load(tmp_path / "manifest.json")
    assert loaded.languages == manifest.languages
    assert loaded.pairs == manifest.pairs
    assert loaded.mono == manifest.mono
    assert loaded.base_dir == tmp_path


def test_manifest_rejects_undeclared_language():
    with pytest.raises(ConfigError, match="undeclared"):
        CorpusManifest(languages=["aa"], pairs=[PairEntry("aa", "zz")])


def test_manifest_loads_data(tmp_path):
    (tmp_path / "ab.a").write_text("x\n", encoding="utf-8")
    (tmp_path / "ab.b").write_text("y\n", encoding="utf-8")
    (tmp_path / "mono.bb").write_text("m1\nm2\n", encoding="utf-8")
    manifest = CorpusManifest(
        languages=["aa", "bb"],
        pairs=[PairEntry("aa", "bb", train=("ab.a", "ab.b"))],
        mono=[MonoEntry("bb", "mono.bb")],
        base_dir=tmp_path,
    )
    corpus = manifest.load_split(manifest.pair("aa", "bb"), "train")
    assert [(p.src, p.tgt) for p in corpus.pairs] == [("x", "y")]
    (entry,) = manifest.mono_for("bb")
    assert manifest.load_mono(entry).lines == ["m1", "m2"]
    with pytest.raises(DataError, match="no valid files"):
        manifest.load_split(manifest.pair("aa", "bb"), "valid")
