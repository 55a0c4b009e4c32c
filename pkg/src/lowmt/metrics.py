"""Corpus-level BLEU and chrF2 scoring, sacrebleu-compatible.

BLEU follows the mteval-v13a tokenization, mixed case, exponential
smoothing and single-reference conventions; chrF2 uses character
6-grams with beta=2 and whitespace stripped.  Both are pinned to the
behaviour of the public sacrebleu releases named in the signature
strings, and the test suite holds them to frozen reference values.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

BLEU_NGRAM_ORDER = 4
CHRF_CHAR_ORDER = 6
CHRF_BETA = 2

# Compatibility targets: sacrebleu release whose output we reproduce.
SACREBLEU_BLEU_VERSION = "1.4.14"
SACREBLEU_CHRF_VERSION = "1.5.1"

_LOG_ZERO = -9999999999  # stand-in for log(0), matches the reference scorer


class ScoreInputError(ValueError):
    """Hypothesis/reference streams are unusable (e.g. length mismatch)."""


class AggregationError(ValueError):
    """A report row is missing a direction required for aggregation."""


@dataclass(frozen=True)
class BleuConfig:
    """BLEU scoring options, fixed to the reproduction target."""

    max_ngram: int = BLEU_NGRAM_ORDER
    tokenization: str = "13a"
    case: str = "mixed"
    smoothing: str = "exp"
    num_refs: int = 1

    def signature(self, lang_pair: str, test_set: str) -> str:
        return (
            f"BLEU+case.{self.case}+lang.{lang_pair}+numrefs.{self.num_refs}"
            f"+smooth.{self.smoothing}+test.{test_set}+tok.{self.tokenization}"
            f"+version.{SACREBLEU_BLEU_VERSION}"
        )


@dataclass(frozen=True)
class ChrfConfig:
    """chrF scoring options, fixed to the reproduction target."""

    char_order: int = CHRF_CHAR_ORDER
    beta: int = CHRF_BETA
    whitespace: bool = False
    num_refs: int = 1

    def signature(self, lang_pair: str, test_set: str) -> str:
        return (
            f"chrF{self.beta}+lang.{lang_pair}+numchars.{self.char_order}"
            f"+numrefs.{self.num_refs}+space.{'true' if self.whitespace else 'false'}"
            f"+test.{test_set}+version.{SACREBLEU_CHRF_VERSION}"
        )


@dataclass
class BleuScore:
    score: float  # [0, 100]
    precisions: list[float]  # per-order, on the 100 scale
    brevity_penalty: float
    sys_len: int
    ref_len: int

    def rounded(self) -> float:
        return round_half_up(self.score, 1)


@dataclass
class ChrfScore:
    score: float  # [0, 1]
    avg_precision: float
    avg_recall: float

    def rounded(self) -> float:
        return round_half_up(self.score, 3)


def round_half_up(value: float, decimals: int) -> float:
    """Round with ties away from zero, the convention used in score tables."""
    q = Decimal(10) ** -decimals
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def tokenize_13a(text: str) -> list[str]:
    """Tokenize per the mteval-v13a scheme used for BLEU.

    Normalizes a handful of SGML entities and whitespace, then pads
    punctuation: symbols always, period/comma only next to non-digits,
    dash after a digit.
    """
    norm = text
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    norm = norm.replace("&quot;", '"')
    norm = norm.replace("&amp;", "&")
    norm = norm.replace("&lt;", "<")
    norm = norm.replace("&gt;", ">")

    norm = f" {norm} "
    norm = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", norm)
    norm = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", norm)
    norm = re.sub(r"([\.,])([^0-9])", r" \1 \2", norm)
    norm = re.sub(r"([0-9])(-)", r"\1 \2 ", norm)
    norm = re.sub(r"\s+", " ", norm)
    return norm.strip().split()


def _word_ngrams(tokens: Sequence[str], max_order: int) -> Counter:
    grams: Counter = Counter()
    for n in range(1, max_order + 1):
        for i in range(len(tokens) - n + 1):
            grams[tuple(tokens[i : i + n])] += 1
    return grams


def bleu(hyps: Sequence[str], refs: Sequence[str], cfg: BleuConfig = BleuConfig()) -> BleuScore:
    """Corpus BLEU over detokenized segments, one reference per segment."""
    if len(hyps) != len(refs):
        raise ScoreInputError(f"hypothesis/reference length mismatch: {len(hyps)} vs {len(refs)}")
    if not hyps:
        raise ScoreInputError("empty input: need at least one segment")

    order = cfg.max_ngram
    correct = [0] * order
    total = [0] * order
    sys_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_tokens = tokenize_13a(hyp.rstrip())
        ref_tokens = tokenize_13a(ref.rstrip())
        sys_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        ref_grams = _word_ngrams(ref_tokens, order)
        for gram, count in _word_ngrams(hyp_tokens, order).items():
            n = len(gram)
            correct[n - 1] += min(count, ref_grams.get(gram, 0))
            total[n - 1] += count

    precisions = [0.0] * order
    smooth = 1.0
    for n in range(1, order + 1):
        if total[n - 1] == 0:
            break
        if correct[n - 1] == 0:
            # exponential smoothing: halve the precision for each empty order
            smooth *= 2
            precisions[n - 1] = 100.0 / (smooth * total[n - 1])
        else:
            precisions[n - 1] = 100.0 * correct[n - 1] / total[n - 1]

    brevity_penalty = 1.0
    if sys_len < ref_len:
        brevity_penalty = math.exp(1 - ref_len / sys_len) if sys_len > 0 else 0.0

    # geometric mean over precision fractions, so a perfect match scores
    # exactly 100.0 (log(1.0) is exact where log(100.0) is not)
    log_sum = sum(math.log(p / 100.0) if p > 0.0 else _LOG_ZERO for p in precisions)
    score = brevity_penalty * 100.0 * math.exp(log_sum / order)
    return BleuScore(score, precisions, brevity_penalty, sys_len, ref_len)


_WHITESPACE_RE = re.compile(r"\s+")


def _char_ngrams(s: str, n: int) -> Counter:
    return Counter(s[i : i + n] for i in range(len(s) - n + 1))


def chrf(hyps: Sequence[str], refs: Sequence[str], cfg: ChrfConfig = ChrfConfig()) -> ChrfScore:
    """Corpus chrF: character n-gram F-score with recall weight beta.

    Statistics are pooled over the whole corpus per order, then averaged
    over the orders where both sides produced any n-grams.
    """
    if len(hyps) != len(refs):
        raise ScoreInputError(f"hypothesis/reference length mismatch: {len(hyps)} vs {len(refs)}")
    if not hyps:
        raise ScoreInputError("empty input: need at least one segment")

    order = cfg.char_order
    hyp_totals = [0] * order
    ref_totals = [0] * order
    match_totals = [0] * order
    for hyp, ref in zip(hyps, refs):
        if not cfg.whitespace:
            hyp = _WHITESPACE_RE.sub("", hyp).strip()
            ref = _WHITESPACE_RE.sub("", ref).strip()
        for i in range(order):
            hyp_grams = _char_ngrams(hyp, i + 1)
            ref_grams = _char_ngrams(ref, i + 1)
            hyp_totals[i] += sum(hyp_grams.values())
            ref_totals[i] += sum(ref_grams.values())
            match_totals[i] += sum((hyp_grams & ref_grams).values())

    avg_precision = 0.0
    avg_recall = 0.0
    effective_order = 0
    for i in range(order):
        if hyp_totals[i] > 0 and ref_totals[i] > 0:
            avg_precision += match_totals[i] / hyp_totals[i]
            avg_recall += match_totals[i] / ref_totals[i]
            effective_order += 1
    if effective_order == 0:
        return ChrfScore(0.0, 0.0, 0.0)
    avg_precision /= effective_order
    avg_recall /= effective_order

    if avg_precision + avg_recall == 0:
        return ChrfScore(0.0, avg_precision, avg_recall)
    beta_sq = cfg.beta**2
    score = (1 + beta_sq) * avg_precision * avg_recall / (beta_sq * avg_precision + avg_recall)
    return ChrfScore(score, avg_precision, avg_recall)


# --- report aggregation -------------------------------------------------


def direction_key(src: str, tgt: str) -> str:
    return f"{src}-{tgt}"


def low_resource_directions(
    pairs: Sequence[tuple[str, str]], high_resource_pair: tuple[str, str]
) -> list[str]:
    """All directed keys from `pairs` except the two of the high-resource pair."""
    high = frozenset(high_resource_pair)
    keys = []
    for a, b in pairs:
        if frozenset((a, b)) == high:
            continue
        keys.append(direction_key(a, b))
        keys.append(direction_key(b, a))
    return keys


@dataclass
class ScoreReport:
    """Per-direction scores for one model plus low-resource aggregates."""

    label: str
    bleu: dict[str, float] = field(default_factory=dict)
    chrf: dict[str, float] = field(default_factory=dict)
    bleu_low: float | None = None
    chrf_low: float | None = None
    bleu_signature: str = ""
    chrf_signature: str = ""


def aggregate_low(
    scores: Mapping[str, float],
    pairs: Sequence[tuple[str, str]],
    high_resource_pair: tuple[str, str],
    decimals: int,
) -> float:
    """Mean score over every low-resource direction, rounded half-up.

    Requires every low-resource direction to be present; the aggregate is
    meaningless over a partial row.
    """
    keys = low_resource_directions(pairs, high_resource_pair)
    missing = [k for k in keys if k not in scores]
    if missing:
        raise AggregationError(f"missing direction(s) for aggregation: {', '.join(missing)}")
    mean = sum(scores[k] for k in keys) / len(keys)
    return round_half_up(mean, decimals)


def aggregate(
    report: ScoreReport,
    pairs: Sequence[tuple[str, str]],
    high_resource_pair: tuple[str, str],
) -> ScoreReport:
    """Fill in the BLEU/chrF low-resource aggregates of a report row."""
    if report.bleu:
        report.bleu_low = aggregate_low(report.bleu, pairs, high_resource_pair, decimals=1)
    if report.chrf:
        report.chrf_low = aggregate_low(report.chrf, pairs, high_resource_pair, decimals=3)
    return report


def report_table(
    reports: Sequence[ScoreReport],
    pairs: Sequence[tuple[str, str]],
    high_resource_pair: tuple[str, str],
    metric: str = "bleu",
) -> str:
    """Tab-separated score table: one row per model, directions in pair order."""
    columns: list[str] = []
    high = frozenset(high_resource_pair)
    ordered = sorted(pairs, key=lambda p: (frozenset(p) != high, pairs.index(p)))
    for a, b in ordered:
        columns.append(direction_key(a, b))
        columns.append(direction_key(b, a))
    agg_name = "BLEU_low" if metric == "bleu" else "CHRF_low"
    lines = ["\t".join(["Model"] + columns + [agg_name])]
    decimals = 1 if metric == "bleu" else 3
    for rep in reports:
        scores = rep.bleu if metric == "bleu" else rep.chrf
        agg = rep.bleu_low if metric == "bleu" else rep.chrf_low
        cells = [rep.label]
        for key in columns:
            value = scores.get(key)
            cells.append("" if value is None else f"{round_half_up(value, decimals):.{decimals}f}")
        cells.append("" if agg is None else f"{agg:.{decimals}f}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
