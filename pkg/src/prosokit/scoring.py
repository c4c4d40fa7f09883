"""Boundary-level scoring of predicted prosodic annotations.

Scores are computed per hierarchy level (PW, PPH, IPH) from per-gap
boundary comparisons.  Two counting modes exist because benchmarking
conventions differ:

* ``cumulative`` (default): a boundary of level m also counts as a
  boundary at every level below it, reflecting hierarchical subsumption.
* ``exact``: a boundary counts only at its own level.

Predictions whose text drifts from the reference (characters dropped or
inserted by a generative model) are scored through a longest-common-
subsequence character alignment: only gaps whose flanking characters are
aligned in both sequences are compared, reference boundaries at uncovered
gaps count as misses, and predicted boundaries at uncovered gaps count as
false alarms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Mapping, Sequence

from .markup import AnnotatedSentence, EmptySentence, ProsodyLevel, parse_annotated

ScoringMode = Literal["cumulative", "exact"]
Aggregation = Literal["micro", "macro"]

SCORED_LEVELS = (ProsodyLevel.PW, ProsodyLevel.PPH, ProsodyLevel.IPH)


class TextMismatch(ValueError):
    """Prediction and reference character sequences differ."""


class EmptyCorpus(ValueError):
    """No samples to score."""


@dataclass(frozen=True)
class BoundaryCounts:
    tp: int
    fp: int
    fn: int

    def __add__(self, other: "BoundaryCounts") -> "BoundaryCounts":
        return BoundaryCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


ZERO_COUNTS = BoundaryCounts(0, 0, 0)


def precision_recall_f(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """P/R/F with pinned zero-count conventions.

    Precision is 1 when nothing was predicted and nothing was missed
    (vacuously perfect), 0 when nothing was predicted but boundaries were
    missed.  Recall is 1 when the reference has no boundaries.  F is 0
    when P+R is 0, and works out to 1 in the doubly-empty case.
    """
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 1.0 if fn == 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f


@dataclass(frozen=True)
class LevelScore:
    """Counts and rates for one hierarchy level (rates are fractions in [0, 1])."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f_score: float

    @classmethod
    def from_counts(cls, counts: BoundaryCounts) -> "LevelScore":
        p, r, f = precision_recall_f(counts.tp, counts.fp, counts.fn)
        return cls(counts.tp, counts.fp, counts.fn, p, r, f)


@dataclass(frozen=True)
class LevelScores:
    """Per-level scores plus their unweighted mean F."""

    pw: LevelScore
    pph: LevelScore
    iph: LevelScore

    @property
    def average_f(self) -> float:
        return (self.pw.f_score + self.pph.f_score + self.iph.f_score) / 3.0

    def by_level(self) -> dict[ProsodyLevel, LevelScore]:
        return {
            ProsodyLevel.PW: self.pw,
            ProsodyLevel.PPH: self.pph,
            ProsodyLevel.IPH: self.iph,
        }

    @classmethod
    def from_counts(cls, counts: Mapping[ProsodyLevel, BoundaryCounts]) -> "LevelScores":
        return cls(
            pw=LevelScore.from_counts(counts[ProsodyLevel.PW]),
            pph=LevelScore.from_counts(counts[ProsodyLevel.PPH]),
            iph=LevelScore.from_counts(counts[ProsodyLevel.IPH]),
        )


def _present(level: ProsodyLevel, at: ProsodyLevel, mode: ScoringMode) -> bool:
    return level >= at if mode == "cumulative" else level == at


def boundary_counts(
    pred: AnnotatedSentence, ref: AnnotatedSentence, mode: ScoringMode = "cumulative"
) -> dict[ProsodyLevel, BoundaryCounts]:
    """Per-level (tp, fp, fn) over the gaps of two same-text sentences."""
    if pred.chars != ref.chars:
        raise TextMismatch("prediction and reference texts differ; align first")
    out: dict[ProsodyLevel, BoundaryCounts] = {}
    for at in SCORED_LEVELS:
        tp = fp = fn = 0
        for p, r in zip(pred.boundaries, ref.boundaries):
            p_here = _present(p, at, mode)
            r_here = _present(r, at, mode)
            if p_here and r_here:
                tp += 1
            elif p_here:
                fp += 1
            elif r_here:
                fn += 1
        out[at] = BoundaryCounts(tp, fp, fn)
    return out


@dataclass(frozen=True)
class CharAlignment:
    """LCS character alignment between a reference and a predicted string."""

    pairs: tuple[tuple[int, int], ...]  # (ref_index, pred_index), strictly increasing
    fidelity: float  # |pairs| / len(ref)


def align_chars(ref: str, pred: str) -> CharAlignment:
    """Longest-common-subsequence alignment over Unicode scalar values.

    Among all maximum-length alignments, returns the lexicographically
    smallest trace: the first divergence prefers the smaller ref_index,
    then the smaller pred_index.
    """
    if not ref or not pred:
        raise ValueError("align_chars requires two non-empty strings")
    n, m = len(ref), len(pred)
    # suffix table: lcs_len[i][j] == LCS length of ref[i:] and pred[j:]
    lcs_len = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = lcs_len[i], lcs_len[i + 1]
        for j in range(m - 1, -1, -1):
            if ref[i] == pred[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]

    pairs: list[tuple[int, int]] = []
    i = j = 0
    while lcs_len[i][j] > 0:
        remaining = lcs_len[i][j]
        if ref[i] == pred[j] and lcs_len[i + 1][j + 1] == remaining - 1:
            pairs.append((i, j))
            i += 1
            j += 1
            continue
        # Smallest pred position where ref[i] can still head a maximal trace.
        advance_to = None
        for cand in range(j, m):
            if ref[i] == pred[cand] and lcs_len[i + 1][cand + 1] == remaining - 1:
                advance_to = cand
                break
        if advance_to is None:
            i += 1  # ref[i] cannot participate; later ref chars only
        else:
            j = advance_to
    return CharAlignment(tuple(pairs), len(pairs) / n)


@dataclass(frozen=True)
class SampleScore:
    """Outcome for one (prediction, reference) pair."""

    counts: dict[ProsodyLevel, BoundaryCounts]
    fidelity: float
    parsable: bool
    aligned: bool  # False when texts matched exactly


def _score_with_alignment(
    pred: AnnotatedSentence, ref: AnnotatedSentence, mode: ScoringMode
) -> tuple[dict[ProsodyLevel, BoundaryCounts], float]:
    alignment = align_chars(ref.text, pred.text)
    pair_set = set(alignment.pairs)
    gap_pairs = [(i, p) for (i, p) in alignment.pairs if (i + 1, p + 1) in pair_set]
    if (len(ref) - 1, len(pred) - 1) in pair_set:
        gap_pairs.append((len(ref) - 1, len(pred) - 1))
    counts: dict[ProsodyLevel, BoundaryCounts] = {}
    for at in SCORED_LEVELS:
        tp = sum(
            1
            for (i, p) in gap_pairs
            if _present(ref.boundaries[i], at, mode) and _present(pred.boundaries[p], at, mode)
        )
        ref_total = sum(1 for b in ref.boundaries if _present(b, at, mode))
        pred_total = sum(1 for b in pred.boundaries if _present(b, at, mode))
        counts[at] = BoundaryCounts(tp, pred_total - tp, ref_total - tp)
    return counts, alignment.fidelity


def _unparsable_counts(
    ref: AnnotatedSentence, mode: ScoringMode
) -> dict[ProsodyLevel, BoundaryCounts]:
    # All reference boundaries become misses; nothing is charged as a false alarm.
    return {
        at: BoundaryCounts(0, 0, sum(1 for b in ref.boundaries if _present(b, at, mode)))
        for at in SCORED_LEVELS
    }


def score_sample(pred_markup: str, ref_markup: str, mode: ScoringMode = "cumulative") -> SampleScore:
    """Score one predicted markup string against its reference markup."""
    ref = parse_annotated(ref_markup, "lenient")
    try:
        pred = parse_annotated(pred_markup, "lenient")
    except EmptySentence:
        return SampleScore(_unparsable_counts(ref, mode), 0.0, parsable=False, aligned=False)
    if pred.chars == ref.chars:
        return SampleScore(boundary_counts(pred, ref, mode), 1.0, parsable=True, aligned=False)
    counts, fidelity = _score_with_alignment(pred, ref, mode)
    return SampleScore(counts, fidelity, parsable=True, aligned=True)


@dataclass(frozen=True)
class CorpusScore:
    """Aggregated corpus scores plus the fidelity/parsability report."""

    scores: LevelScores
    mode: ScoringMode
    aggregation: Aggregation
    mean_fidelity: float
    unparsable: int
    n_samples: int
    samples: tuple[SampleScore, ...]


def corpus_fscore(
    samples: Sequence[tuple[str, str]] | Iterable[tuple[str, str]],
    mode: ScoringMode = "cumulative",
    aggregation: Aggregation = "micro",
) -> CorpusScore:
    """Score a corpus of (predicted markup, reference markup) pairs.

    ``micro`` pools (tp, fp, fn) over all samples before computing rates;
    ``macro`` averages per-sample precision/recall/F (count fields still
    carry the pooled totals, so the count identities hold for micro only).
    """
    scored = [score_sample(pred, ref, mode) for pred, ref in samples]
    if not scored:
        raise EmptyCorpus("corpus_fscore requires at least one sample")
    pooled = {at: ZERO_COUNTS for at in SCORED_LEVELS}
    for s in scored:
        pooled = {at: pooled[at] + s.counts[at] for at in SCORED_LEVELS}
    if aggregation == "micro":
        scores = LevelScores.from_counts(pooled)
    else:
        per_level: dict[ProsodyLevel, LevelScore] = {}
        for at in SCORED_LEVELS:
            rates = [precision_recall_f(s.counts[at].tp, s.counts[at].fp, s.counts[at].fn) for s in scored]
            p = sum(r[0] for r in rates) / len(rates)
            r_ = sum(r[1] for r in rates) / len(rates)
            f = sum(r[2] for r in rates) / len(rates)
            c = pooled[at]
            per_level[at] = LevelScore(c.tp, c.fp, c.fn, p, r_, f)
        scores = LevelScores(
            per_level[ProsodyLevel.PW], per_level[ProsodyLevel.PPH], per_level[ProsodyLevel.IPH]
        )
    return CorpusScore(
        scores=scores,
        mode=mode,
        aggregation=aggregation,
        mean_fidelity=sum(s.fidelity for s in scored) / len(scored),
        unparsable=sum(1 for s in scored if not s.parsable),
        n_samples=len(scored),
        samples=tuple(scored),
    )
