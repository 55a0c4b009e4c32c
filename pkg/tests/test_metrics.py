import math
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowmt import metrics
from lowmt.metrics import (
    AggregationError,
    BleuConfig,
    ChrfConfig,
    ScoreInputError,
    ScoreReport,
    aggregate,
    aggregate_low,
    bleu,
    chrf,
    round_half_up,
    tokenize_13a,
)

FIXTURE = Path(__file__).parent / "data" / "metric_fixture.tsv"

# Frozen reference values for the committed 20-pair fixture, computed once
# with the public sacrebleu scorer (exp smoothing, 13a, mixed case; chrF2
# numchars 6, whitespace stripped).
FIXTURE_BLEU = 59.1794603203
FIXTURE_CHRF = 0.8175041265


def load_fixture():
    hyps, refs = [], []
    for line in FIXTURE.read_text(encoding="utf-8").splitlines():
        h, r = line.split("\t")
        hyps.append(h)
        refs.append(r)
    return hyps, refs


# --- 13a tokenization ----------------------------------------------------


def test_13a_punctuation():
    assert tokenize_13a("Hello, world!") == ["Hello", ",", "world", "!"]


def test_13a_plain_word():
    assert tokenize_13a("abc") == ["abc"]


def test_13a_empty():
    assert tokenize_13a("") == []


def test_13a_digits_keep_decimal_point():
    # period between digits stays attached; digit-dash splits
    assert tokenize_13a("3.5 percent") == ["3.5", "percent"]
    assert tokenize_13a("1998-2004") == ["1998", "-", "2004"]


# --- BLEU ----------------------------------------------------------------


def test_bleu_identity_is_100():
    hyps = ["tere maailm", "see on test", "kolmas lause siin pikem"]
    assert bleu(hyps, list(hyps)).score == pytest.approx(100.0)


def test_bleu_all_empty_hyps_is_0():
    assert bleu(["", ""], ["a b c", "d e f"]).score == 0.0


def test_bleu_cat_sat_oracle():
    # Hand n-gram count: p=(5/6, 3/5, 1/4, exp-smoothed 1/6), BP=1
    # => 100*exp(mean log) = 37.9918 (cross-checked against the public scorer).
    score = bleu(["the cat sat on the mat"], ["the cat is on the mat"])
    assert score.score == pytest.approx(37.9917842826, abs=0.01)
    assert score.precisions == pytest.approx([500 / 6, 60.0, 25.0, 100 / 6])
    assert score.brevity_penalty == 1.0


def test_bleu_mismatched_lengths():
    with pytest.raises(ScoreInputError):
        bleu(["a"], ["a", "b"])


def test_bleu_fixture_matches_reference_scorer():
    hyps, refs = load_fixture()
    assert bleu(hyps, refs).score == pytest.approx(FIXTURE_BLEU, abs=0.01)


def test_bleu_brevity_penalty_applies():
    score = bleu(["the cat"], ["the cat is on the mat"])
    assert score.brevity_penalty == pytest.approx(math.exp(1 - 6 / 2))


# --- chrF ----------------------------------------------------------------


def test_chrf_identity_is_1():
    hyps = ["tere maailm", "teine lause"]
    assert chrf(hyps, list(hyps)).score == pytest.approx(1.0)


def test_chrf_disjoint_chars_is_0():
    assert chrf(["aaaa"], ["bbbb"]).score == 0.0


def test_chrf_abcd_oracle():
    # Orders 1-4 active: P=R=(3/4+2/3+1/2+0)/4 = 0.4791666..., F2 = P.
    assert chrf(["abcd"], ["abce"]).score == pytest.approx(0.4791666667, abs=1e-4)


def test_chrf_fixture_matches_reference_scorer():
    hyps, refs = load_fixture()
    assert chrf(hyps, refs).score == pytest.approx(FIXTURE_CHRF, abs=1e-3)


def test_chrf_whitespace_excluded():
    # identical up to spacing => perfect score when whitespace is stripped
    assert chrf(["a b c d e f"], ["abc def"]).score == pytest.approx(1.0)


# --- shared properties ----------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(alphabet="abcd e", min_size=1, max_size=12), min_size=1, max_size=8), st.randoms())
def test_permutation_invariance(texts, rng):
    refs = [t + "x" for t in texts]
    pairs = list(zip(texts, refs))
    shuffled = pairs[:]
    rng.shuffle(shuffled)
    h1, r1 = zip(*pairs)
    h2, r2 = zip(*shuffled)
    assert bleu(list(h1), list(r1)).score == pytest.approx(bleu(list(h2), list(r2)).score)
    assert chrf(list(h1), list(r1)).score == pytest.approx(chrf(list(h2), list(r2)).score)


def test_truncation_never_increases_bleu():
    rng = random.Random(7)
    words = ["tere", "maa", "ilm", "suur", "koer", "auto"]
    for _ in range(50):
        refs = [" ".join(rng.choices(words, k=rng.randint(2, 8))) for _ in range(10)]
        hyps = [" ".join(rng.choices(words, k=rng.randint(2, 8))) for _ in range(10)]
        truncated = [h.split()[0] for h in hyps]
        assert bleu(truncated, refs).score <= bleu(hyps, refs).score + 1e-9


# --- signatures ------------------------------------------------------------


def test_bleu_signature_format():
    sig = BleuConfig().signature("et-vro", "flores")
    assert sig == "BLEU+case.mixed+lang.et-vro+numrefs.1+smooth.exp+test.flores+tok.13a+version.1.4.14"


def test_chrf_signature_format():
    sig = ChrfConfig().signature("sme-sma", "holdout")
    assert sig == "chrF2+lang.sme-sma+numchars.6+numrefs.1+space.false+test.holdout+version.1.5.1"


# --- aggregation -----------------------------------------------------------

PAIRS = [("et", "fi"), ("et", "vro"), ("fi", "sme"), ("fi", "sma"), ("sme", "sma")]
HIGH = ("et", "fi")

ML_ROW = {
    "et-fi": 30.9, "fi-et": 29.5,
    "et-vro": 23.8, "vro-et": 29.6,
    "fi-sme": 31.3, "sme-fi": 34.7,
    "fi-sma": 9.4, "sma-fi": 9.4,
    "sme-sma": 19.8, "sma-sme": 19.8,
}

BT12_ROW = {
    "et-fi": 31.3, "fi-et": 29.6,
    "et-vro": 26.2, "vro-et": 31.3,
    "fi-sme": 31.4, "sme-fi": 36.4,
    "fi-sma": 12.4, "sma-fi": 10.6,
    "sme-sma": 21.6, "sma-sme": 20.7,
}


def test_aggregate_published_ml_row():
    assert aggregate_low(ML_ROW, PAIRS, HIGH, decimals=1) == 22.2


def test_aggregate_published_bt_row():
    assert aggregate_low(BT12_ROW, PAIRS, HIGH, decimals=1) == 23.8


def test_aggregate_constant_row():
    row = {k: 7.3 for k in ML_ROW}
    assert aggregate_low(row, PAIRS, HIGH, decimals=1) == 7.3


def test_aggregate_missing_direction():
    row = dict(ML_ROW)
    del row["sme-sma"]
    with pytest.raises(AggregationError, match="sme-sma"):
        aggregate_low(row, PAIRS, HIGH, decimals=1)


def test_aggregate_fills_report():
    rep = ScoreReport(label="Multilingual (ML)", bleu=dict(ML_ROW))
    aggregate(rep, PAIRS, HIGH)
    assert rep.bleu_low == 22.2
    assert rep.chrf_low is None


def test_round_half_up():
    assert round_half_up(22.25, 1) == 22.3
    assert round_half_up(23.825, 1) == 23.8  # mean of the BT row is 23.825
    assert round_half_up(0.39349, 3) == 0.393
    assert round_half_up(0.5615, 3) == 0.562


def test_report_table_layout():
    rep = aggregate(ScoreReport(label="ML", bleu=dict(ML_ROW)), PAIRS, HIGH)
    table = metrics.report_table([rep], PAIRS, HIGH, metric="bleu")
    lines = table.strip().split("\n")
    assert lines[0].split("\t") == [
        "Model", "et-fi", "fi-et", "et-vro", "vro-et", "fi-sme", "sme-fi",
        "fi-sma", "sma-fi", "sme-sma", "sma-sme", "BLEU_low",
    ]
    assert lines[1].split("\t")[0] == "ML"
    assert lines[1].split("\t")[-1] == "22.2"
