from __future__ import annotations

import random

import pytest

from helpers import (
    brute_force_lcs,
    oracle_boundary_counts,
    oracle_min_trace,
    random_markup_pair,
    random_sentence,
)
from prosokit.markup import AnnotatedSentence, ProsodyLevel, parse_annotated, render_annotated
from prosokit.scoring import (
    EmptyCorpus,
    LevelScores,
    BoundaryCounts,
    SCORED_LEVELS,
    TextMismatch,
    align_chars,
    boundary_counts,
    corpus_fscore,
    precision_recall_f,
    score_sample,
)

L = ProsodyLevel


class TestBoundaryCounts:
    def test_spec_example_cumulative(self):
        pred = parse_annotated("AB#1CD#2E")
        ref = parse_annotated("AB#2CD#2E")
        counts = boundary_counts(pred, ref, "cumulative")
        assert (counts[L.PW].tp, counts[L.PW].fp, counts[L.PW].fn) == (2, 0, 0)
        assert (counts[L.PPH].tp, counts[L.PPH].fp, counts[L.PPH].fn) == (1, 0, 1)
        scores = LevelScores.from_counts(counts)
        assert scores.pph.f_score == pytest.approx(2 / 3, abs=1e-12)

    def test_perfect_prediction(self):
        ref = parse_annotated("你好#1世界#2再见#3了")
        counts = boundary_counts(ref, ref, "cumulative")
        for level in SCORED_LEVELS:
            assert counts[level].fp == 0 and counts[level].fn == 0
        scores = LevelScores.from_counts(counts)
        assert scores.average_f == 1.0

    def test_empty_prediction(self):
        ref = parse_annotated("你好#1世界#1了")
        pred = parse_annotated("你好世界了")
        counts = boundary_counts(pred, ref, "cumulative")
        assert counts[L.PW] == BoundaryCounts(0, 0, 2)
        assert LevelScores.from_counts(counts).pw.f_score == 0.0

    def test_text_mismatch(self):
        with pytest.raises(TextMismatch):
            boundary_counts(parse_annotated("AB"), parse_annotated("AC"))

    @pytest.mark.parametrize("mode", ["cumulative", "exact"])
    def test_matches_oracle_on_random_pairs(self, mode):
        rng = random.Random(7)
        for _ in range(200):
            pred_markup, ref_markup = random_markup_pair(rng)
            pred, ref = parse_annotated(pred_markup), parse_annotated(ref_markup)
            counts = boundary_counts(pred, ref, mode)
            expected = oracle_boundary_counts(pred, ref, mode)
            for level in SCORED_LEVELS:
                assert (counts[level].tp, counts[level].fp, counts[level].fn) == expected[level]

    def test_swap_exchanges_fp_fn(self):
        rng = random.Random(13)
        for _ in range(100):
            pred_markup, ref_markup = random_markup_pair(rng)
            a = boundary_counts(parse_annotated(pred_markup), parse_annotated(ref_markup))
            b = boundary_counts(parse_annotated(ref_markup), parse_annotated(pred_markup))
            for level in SCORED_LEVELS:
                assert a[level].tp == b[level].tp
                assert a[level].fp == b[level].fn
                assert a[level].fn == b[level].fp

    def test_cumulative_tp_monotone_in_level(self):
        rng = random.Random(17)
        for _ in range(100):
            pred_markup, ref_markup = random_markup_pair(rng)
            counts = boundary_counts(parse_annotated(pred_markup), parse_annotated(ref_markup), "cumulative")
            assert counts[L.PW].tp >= counts[L.PPH].tp >= counts[L.IPH].tp


class TestZeroConventions:
    def test_vacuous_perfection(self):
        p, r, f = precision_recall_f(0, 0, 0)
        assert (p, r, f) == (1.0, 1.0, 1.0)

    def test_nothing_predicted_but_needed(self):
        p, r, f = precision_recall_f(0, 0, 3)
        assert (p, r, f) == (0.0, 0.0, 0.0)

    def test_predicted_into_empty_reference(self):
        p, r, f = precision_recall_f(0, 2, 0)
        assert p == 0.0 and r == 1.0 and f == 0.0


class TestAlignChars:
    def test_spec_example(self):
        a = align_chars("你好世界", "你世界")
        assert a.pairs == ((0, 0), (2, 1), (3, 2))
        assert a.fidelity == 0.75

    def test_identical(self):
        a = align_chars("abcd", "abcd")
        assert a.pairs == ((0, 0), (1, 1), (2, 2), (3, 3))
        assert a.fidelity == 1.0

    def test_disjoint(self):
        a = align_chars("ABC", "XYZ")
        assert a.pairs == ()
        assert a.fidelity == 0.0

    def test_leftmost_tie_breaking(self):
        # both strings contain one common char reachable two ways
        assert align_chars("za", "aa").pairs == ((1, 0),)
        assert align_chars("ab", "ba").pairs == ((0, 1),)
        assert align_chars("aa", "za").pairs == ((0, 1),)

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            align_chars("", "a")
        with pytest.raises(ValueError):
            align_chars("a", "")

    def test_matches_brute_force_on_small_strings(self):
        rng = random.Random(31)
        for _ in range(300):
            a = "".join(rng.choice("abc") for _ in range(rng.randint(1, 6)))
            b = "".join(rng.choice("abc") for _ in range(rng.randint(1, 6)))
            length, trace = brute_force_lcs(a, b)
            got = align_chars(a, b)
            assert len(got.pairs) == length
            assert got.pairs == trace

    def test_matches_memoized_oracle_on_longer_strings(self):
        rng = random.Random(37)
        for _ in range(200):
            a = "".join(rng.choice("abc") for _ in range(rng.randint(1, 12)))
            b = "".join(rng.choice("abc") for _ in range(rng.randint(1, 12)))
            length, trace = oracle_min_trace(a, b)
            got = align_chars(a, b)
            assert len(got.pairs) == length
            assert got.pairs == trace


class TestCorpusFscore:
    def test_all_perfect(self):
        samples = [("你好#1世界", "你好#1世界"), ("AB#2CD", "AB#2CD")]
        score = corpus_fscore(samples)
        assert score.scores.average_f == 1.0
        assert score.mean_fidelity == 1.0
        assert score.unparsable == 0

    def test_single_sample_with_vacuous_level(self):
        # PW F=100, PPH F=66.67, IPH vacuous F=100 -> average 88.89
        score = corpus_fscore([("AB#1CD#2E", "AB#2CD#2E")])
        assert score.scores.pw.f_score == pytest.approx(1.0)
        assert score.scores.pph.f_score == pytest.approx(2 / 3)
        assert score.scores.iph.f_score == 1.0
        assert score.scores.average_f == pytest.approx((1 + 2 / 3 + 1) / 3)

    def test_dropped_char_next_to_boundary_becomes_fn(self):
        # prediction lost the char carrying the reference PW boundary:
        # hand count: ref has 1 PW boundary, pred recovered none -> fn=1
        score = corpus_fscore([("你世界", "你好#1世界")])
        assert score.scores.pw.tp == 0
        assert score.scores.pw.fn == 1
        assert score.scores.pw.fp == 0
        assert score.samples[0].fidelity == 0.75

    def test_preserved_boundary_across_unrelated_drop(self):
        # dropped char is away from the boundary; flanking chars still align
        score = corpus_fscore([("你好#1世", "你好#1世界")])
        assert score.scores.pw.tp == 1
        assert score.scores.pw.fn == 0

    def test_unparsable_prediction_scores_as_misses(self):
        score = corpus_fscore([("#4", "你好#1世界")])
        assert score.unparsable == 1
        assert score.scores.pw.fn == 1
        assert score.scores.pw.fp == 0
        assert score.mean_fidelity == 0.0

    def test_micro_pooling_matches_concatenation(self):
        rng = random.Random(41)
        samples1 = [random_markup_pair(rng) for _ in range(20)]
        samples2 = [random_markup_pair(rng) for _ in range(20)]
        combined = corpus_fscore(samples1 + samples2)
        part1 = corpus_fscore(samples1)
        part2 = corpus_fscore(samples2)
        for level_name in ("pw", "pph", "iph"):
            whole = getattr(combined.scores, level_name)
            a = getattr(part1.scores, level_name)
            b = getattr(part2.scores, level_name)
            assert (whole.tp, whole.fp, whole.fn) == (a.tp + b.tp, a.fp + b.fp, a.fn + b.fn)

    def test_macro_differs_but_agrees_on_perfect(self):
        samples = [("你好#1世界", "你好#1世界")] * 3
        micro = corpus_fscore(samples, aggregation="micro")
        macro = corpus_fscore(samples, aggregation="macro")
        assert micro.scores.average_f == macro.scores.average_f == 1.0

    def test_swap_symmetry_through_alignment(self):
        # text drift on one side; swapping roles must swap fp and fn
        forward = score_sample("你世界#1啊", "你好#1世界啊")
        backward = score_sample("你好#1世界啊", "你世界#1啊")
        for level in SCORED_LEVELS:
            assert forward.counts[level].fp == backward.counts[level].fn
            assert forward.counts[level].fn == backward.counts[level].fp

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            corpus_fscore([])

    def test_scoring_self_full_marks_random(self):
        rng = random.Random(43)
        for _ in range(50):
            s = random_sentence(rng)
            markup = render_annotated(s)
            for mode in ("cumulative", "exact"):
                for agg in ("micro", "macro"):
                    score = corpus_fscore([(markup, markup)], mode, agg)
                    assert score.scores.average_f == 1.0
