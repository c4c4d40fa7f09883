"""JSON feature codec: learning-target encoding, lenient decoding, joint metrics.

The learning target for joint response/feature generation is the response
text, a separator line, then a JSON array with one object per character::

    response text
    ###FEATURES###
    [{"char":"...","dur_ms":123,"pinyin":"...","prosody":1,"d_high":1.25,"d_low":-0.50}, ...]

Key names, key order, the separator, and number formatting (integers
bare, D-values with exactly two decimals, absent pitch as null) are fixed
so that encoding is byte-deterministic: encode -> decode(strict) ->
encode is the identity on bytes.

Decoding of model output is best-effort under the ``lenient`` policy: a
missing separator, trailing garbage, truncated arrays, missing keys, and
out-of-range prosody are all tolerated and reported as diagnostics, and
lenient decoding never raises.  A sample counts as parsable iff a JSON
array with at least one object carrying a ``char`` key is recovered.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

from .features import FeatureRecord, FeatureSequence
from .markup import ProsodyLevel
from .scoring import align_chars

SEPARATOR = "###FEATURES###"
_SEPARATOR_BLOCK = f"\n{SEPARATOR}\n"
_KEYS = ("char", "dur_ms", "pinyin", "prosody", "d_high", "d_low")
NUMERIC_FIELDS = ("dur_ms", "d_high", "d_low")

Policy = Literal["strict", "lenient"]


class ResponseFeatureMismatch(ValueError):
    """Response text does not match the feature characters."""


class DecodeError(ValueError):
    """Strict decoding rejected the input."""


class Unparsable(DecodeError):
    """No JSON feature array could be recovered."""


class EmptyInput(ValueError):
    """Aggregation over zero samples."""


def _format_d(value: float | None) -> str:
    if value is None:
        return "null"
    s = f"{value:.2f}"
    return "0.00" if s == "-0.00" else s


def _check_encodable(response: str, features: FeatureSequence) -> None:
    if not features:
        raise ResponseFeatureMismatch("feature sequence is empty")
    text = "".join(r.char for r in features)
    if response != text:
        raise ResponseFeatureMismatch(
            f"response {response!r} != feature characters {text!r}"
        )
    if _SEPARATOR_BLOCK in response:
        raise ResponseFeatureMismatch("response contains the separator line")
    for r in features:
        if not r.is_complete:
            raise ResponseFeatureMismatch(f"incomplete feature record for {r.char!r}")
        if (r.d_high is None) != (r.d_low is None):
            raise ResponseFeatureMismatch(f"pitch fields must be both present or both absent ({r.char!r})")


def encode_target(response: str, features: FeatureSequence) -> str:
    """Deterministic byte encoding of a response and its feature sequence."""
    _check_encodable(response, features)
    objs = []
    for r in features:
        assert r.duration_ms is not None and r.pinyin is not None and r.prosody is not None
        objs.append(
            "{"
            f'"char":{json.dumps(r.char, ensure_ascii=False)},'
            f'"dur_ms":{r.duration_ms},'
            f'"pinyin":{json.dumps(r.pinyin, ensure_ascii=False)},'
            f'"prosody":{int(r.prosody)},'
            f'"d_high":{_format_d(r.d_high)},'
            f'"d_low":{_format_d(r.d_low)}'
            "}"
        )
    return f"{response}{_SEPARATOR_BLOCK}[{','.join(objs)}]"


@dataclass
class DecodeDiagnostics:
    """What lenient decoding had to tolerate."""

    missing_separator: bool = False
    truncated: bool = False
    trailing_garbage: bool = False
    missing_keys: int = 0
    bad_values: int = 0
    clamped_prosody: int = 0
    skipped_records: int = 0

    @property
    def clean(self) -> bool:
        return self == DecodeDiagnostics()


@dataclass(frozen=True)
class DecodeResult:
    response: str
    records: FeatureSequence
    diagnostics: DecodeDiagnostics
    parsable: bool


def _is_number(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _record_from_object(obj: Mapping[str, object], diag: DecodeDiagnostics) -> FeatureRecord | None:
    char = obj.get("char")
    if not isinstance(char, str) or not char:
        diag.skipped_records += 1
        return None
    if len(char) > 1:
        diag.bad_values += 1
        char = char[0]

    def take_number(key: str) -> float | None:
        if key not in obj:
            diag.missing_keys += 1
            return None
        v = obj[key]
        if v is None:
            return None
        if not _is_number(v):
            diag.bad_values += 1
            return None
        return float(v)

    dur = take_number("dur_ms")
    duration_ms = int(round(dur)) if dur is not None else None

    if "pinyin" not in obj:
        diag.missing_keys += 1
        pinyin = None
    else:
        pinyin = obj["pinyin"]
        if not isinstance(pinyin, str):
            diag.bad_values += 1
            pinyin = None

    if "prosody" not in obj:
        diag.missing_keys += 1
        prosody = None
    else:
        v = obj["prosody"]
        if _is_number(v):
            iv = int(v)
            if not 0 <= iv <= 3:
                iv = min(3, max(0, iv))
                diag.clamped_prosody += 1
            prosody = ProsodyLevel(iv)
        else:
            diag.bad_values += 1
            prosody = None

    d_high = take_number("d_high")
    d_low = take_number("d_low")
    return FeatureRecord(char, duration_ms, pinyin, prosody, d_high, d_low)


def _recover_array(text: str, diag: DecodeDiagnostics) -> tuple[list[object], int] | None:
    """First decodable JSON array and its start offset, salvaging truncation."""
    decoder = json.JSONDecoder()
    start = text.find("[")
    while start != -1:
        try:
            value, end = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            salvaged = _salvage_truncated(text, start, decoder)
            if salvaged:
                diag.truncated = True
                return salvaged, start
        else:
            if isinstance(value, list):
                if text[end:].strip():
                    diag.trailing_garbage = True
                return value, start
        start = text.find("[", start + 1)
    return None


def _salvage_truncated(text: str, start: int, decoder: json.JSONDecoder) -> list[object]:
    """Complete leading objects of an array cut off mid-stream."""
    items: list[object] = []
    pos = start + 1
    n = len(text)
    while True:
        while pos < n and text[pos] in " \t\r\n,":
            pos += 1
        if pos >= n or text[pos] == "]":
            break
        try:
            value, pos = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            break
        items.append(value)
    return items


def decode_target(text: str, policy: Policy = "strict") -> DecodeResult:
    """Decode an encoded target (or a model's attempt at one).

    ``strict`` accepts exactly the output grammar of :func:`encode_target`
    and raises :class:`DecodeError` (or :class:`Unparsable` when no array
    is present at all) on deviation.  ``lenient`` never raises: anything
    unrecoverable yields ``parsable=False`` with empty records.
    """
    if policy == "strict":
        return _decode_strict(text)
    diag = DecodeDiagnostics()
    sep_at = text.find(_SEPARATOR_BLOCK)
    if sep_at >= 0:
        response = text[:sep_at]
        payload = text[sep_at + len(_SEPARATOR_BLOCK) :]
        found = _recover_array(payload, diag)
        if found is None:
            # Separator present but the payload is hopeless; retry on everything.
            found = _recover_array(text, diag)
    elif text.startswith(f"{SEPARATOR}\n"):
        response = ""
        found = _recover_array(text[len(SEPARATOR) + 1 :], diag)
    else:
        diag.missing_separator = True
        found = _recover_array(text, diag)
        response = text[: found[1]].rstrip() if found is not None else text
    records: list[FeatureRecord] = []
    if found is not None:
        raw = found[0]
        for item in raw:
            if not isinstance(item, dict):
                diag.skipped_records += 1
                continue
            rec = _record_from_object(item, diag)
            if rec is not None:
                records.append(rec)
    return DecodeResult(
        response=response,
        records=tuple(records),
        diagnostics=diag,
        parsable=len(records) >= 1,
    )


def _decode_strict(text: str) -> DecodeResult:
    sep_at = text.find(_SEPARATOR_BLOCK)
    if sep_at == -1:
        raise Unparsable("missing separator line")
    response = text[:sep_at]
    payload = text[sep_at + len(_SEPARATOR_BLOCK) :]
    try:
        raw = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise Unparsable(f"feature array does not parse: {exc}") from None
    if not isinstance(raw, list) or not raw:
        raise Unparsable("feature payload is not a non-empty JSON array")
    records = []
    for idx, item in enumerate(raw):
        if not isinstance(item, dict) or tuple(item.keys()) != _KEYS:
            raise DecodeError(f"record {idx} must have exactly the keys {_KEYS}")
        char, dur, pinyin, prosody, d_high, d_low = (item[k] for k in _KEYS)
        if not (isinstance(char, str) and len(char) == 1):
            raise DecodeError(f"record {idx}: char must be a single character")
        if not (isinstance(dur, int) and not isinstance(dur, bool) and dur >= 1):
            raise DecodeError(f"record {idx}: dur_ms must be a positive integer")
        if not isinstance(pinyin, str):
            raise DecodeError(f"record {idx}: pinyin must be a string")
        if not (isinstance(prosody, int) and not isinstance(prosody, bool) and 0 <= prosody <= 3):
            raise DecodeError(f"record {idx}: prosody must be an integer in 0..3")
        for name, v in (("d_high", d_high), ("d_low", d_low)):
            if v is not None and not _is_number(v):
                raise DecodeError(f"record {idx}: {name} must be a number or null")
        if (d_high is None) != (d_low is None):
            raise DecodeError(f"record {idx}: d_high/d_low must be both present or both null")
        if d_high is not None and d_low is not None and d_low > d_high:
            raise DecodeError(f"record {idx}: d_low exceeds d_high")
        records.append(
            FeatureRecord(
                char,
                dur,
                pinyin,
                ProsodyLevel(prosody),
                float(d_high) if d_high is not None else None,
                float(d_low) if d_low is not None else None,
            )
        )
    result = DecodeResult(response, tuple(records), DecodeDiagnostics(), parsable=True)
    if encode_target(result.response, result.records) != text:
        raise DecodeError("input is not in canonical encoded form")
    return result


@dataclass(frozen=True)
class JointTarget:
    """Ground truth for one joint response/feature sample."""

    response_text: str
    features: FeatureSequence

    def __post_init__(self) -> None:
        _check_encodable(self.response_text, self.features)

    @property
    def encoded(self) -> str:
        return encode_target(self.response_text, self.features)


def normalize_pinyin(syllable: str) -> str:
    """Canonical comparison form: lowercase ASCII, trailing tone digit, neutral=5."""
    s = syllable.strip().lower().replace("ü", "v").replace("u:", "v")
    if s and s[-1].isdigit():
        tone = "5" if s[-1] == "0" else s[-1]
        return s[:-1] + tone
    return s + "5" if s else s


@dataclass(frozen=True)
class JointSampleResult:
    """Comparison of one decoded prediction against its ground truth."""

    parsable: bool
    matched_chars: int
    ref_chars: int
    matched_pinyin: int
    matched_prosody: int
    numeric_pairs: dict[str, tuple[tuple[float, float], ...]] = field(
        default_factory=lambda: {f: () for f in NUMERIC_FIELDS}
    )


def eval_joint_sample(pred_text: str, ref: JointTarget) -> JointSampleResult:
    """Decode a model's output leniently and compare it with the ground truth.

    Characters are matched by LCS alignment against the reference feature
    characters (model output frequently drops characters); pinyin matches
    after normalization, prosody matches on exact level equality, and
    numeric values are collected as (predicted, reference) pairs for every
    matched character where both sides carry the value.
    """
    decoded = decode_target(pred_text, "lenient")
    n_ref = len(ref.features)
    if not decoded.parsable:
        return JointSampleResult(False, 0, n_ref, 0, 0)
    pred_chars = "".join(r.char for r in decoded.records)
    alignment = align_chars(ref.response_text, pred_chars)
    matched_pinyin = 0
    matched_prosody = 0
    pairs: dict[str, list[tuple[float, float]]] = {f: [] for f in NUMERIC_FIELDS}
    for ref_i, pred_i in alignment.pairs:
        ref_rec = ref.features[ref_i]
        pred_rec = decoded.records[pred_i]
        if pred_rec.pinyin is not None and ref_rec.pinyin is not None:
            if normalize_pinyin(pred_rec.pinyin) == normalize_pinyin(ref_rec.pinyin):
                matched_pinyin += 1
        if pred_rec.prosody is not None and pred_rec.prosody == ref_rec.prosody:
            matched_prosody += 1
        numeric = (
            ("dur_ms", pred_rec.duration_ms, ref_rec.duration_ms),
            ("d_high", pred_rec.d_high, ref_rec.d_high),
            ("d_low", pred_rec.d_low, ref_rec.d_low),
        )
        for name, pred_v, ref_v in numeric:
            if pred_v is not None and ref_v is not None:
                pairs[name].append((float(pred_v), float(ref_v)))
    return JointSampleResult(
        parsable=True,
        matched_chars=len(alignment.pairs),
        ref_chars=n_ref,
        matched_pinyin=matched_pinyin,
        matched_prosody=matched_prosody,
        numeric_pairs={f: tuple(v) for f, v in pairs.items()},
    )


@dataclass(frozen=True)
class NumericStats:
    count: int
    rmse: float | None
    pearson_r: float | None


@dataclass(frozen=True)
class JointReport:
    """Pooled joint-evaluation rates (fractions in [0, 1])."""

    n_samples: int
    n_parsable: int
    total_ref_chars: int
    total_matched_chars: int
    total_matched_pinyin: int
    total_matched_prosody: int
    parsable_rate: float
    matched_char_rate: float
    matched_pinyin_rate: float
    matched_prosody_rate: float
    numeric_pairs: dict[str, tuple[tuple[float, float], ...]]
    numeric_stats: dict[str, NumericStats]


def _numeric_stats(pairs: Sequence[tuple[float, float]]) -> NumericStats:
    n = len(pairs)
    if n == 0:
        return NumericStats(0, None, None)
    rmse = math.sqrt(sum((p - r) ** 2 for p, r in pairs) / n)
    if n < 2:
        return NumericStats(n, rmse, None)
    mp = sum(p for p, _ in pairs) / n
    mr = sum(r for _, r in pairs) / n
    cov = sum((p - mp) * (r - mr) for p, r in pairs)
    var_p = sum((p - mp) ** 2 for p, _ in pairs)
    var_r = sum((r - mr) ** 2 for _, r in pairs)
    if var_p == 0 or var_r == 0:
        return NumericStats(n, rmse, None)
    return NumericStats(n, rmse, cov / math.sqrt(var_p * var_r))


def aggregate_joint(results: Sequence[JointSampleResult]) -> JointReport:
    """Pool per-sample results into corpus rates.

    Character matching is pooled over all samples (unparsable ones still
    contribute their reference length to the denominator); pinyin and
    prosody rates use the pooled matched-character count as denominator.
    """
    if not results:
        raise EmptyInput("aggregate_joint requires at least one result")
    total = len(results)
    parsable = sum(1 for r in results if r.parsable)
    ref_chars = sum(r.ref_chars for r in results)
    matched = sum(r.matched_chars for r in results)
    pinyin = sum(r.matched_pinyin for r in results)
    prosody = sum(r.matched_prosody for r in results)
    pooled: dict[str, list[tuple[float, float]]] = {f: [] for f in NUMERIC_FIELDS}
    for r in results:
        for name in NUMERIC_FIELDS:
            pooled[name].extend(r.numeric_pairs.get(name, ()))
    numeric_pairs = {f: tuple(v) for f, v in pooled.items()}
    return JointReport(
        n_samples=total,
        n_parsable=parsable,
        total_ref_chars=ref_chars,
        total_matched_chars=matched,
        total_matched_pinyin=pinyin,
        total_matched_prosody=prosody,
        parsable_rate=parsable / total,
        matched_char_rate=matched / ref_chars if ref_chars else 0.0,
        matched_pinyin_rate=pinyin / matched if matched else 0.0,
        matched_prosody_rate=prosody / matched if matched else 0.0,
        numeric_pairs=numeric_pairs,
        numeric_stats={f: _numeric_stats(v) for f, v in numeric_pairs.items()},
    )


def scatter_rows(report: JointReport) -> list[tuple[str, float, float]]:
    """(field, predicted, reference) rows for scatter-plot CSV export."""
    rows: list[tuple[str, float, float]] = []
    for name in NUMERIC_FIELDS:
        rows.extend((name, p, r) for p, r in report.numeric_pairs[name])
    return rows
