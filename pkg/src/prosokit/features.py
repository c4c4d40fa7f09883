"""Per-character linguistic features: duration, pinyin, prosody, pitch D-values.

Pitch is reported on the D-value scale, a logarithmic scale relating a
frequency F in Hz to a reference frequency F0:

    D = 5 * log2(F / F0)

so one octave above the reference is +5 and one octave below is -5.  The
reference defaults to the speaker's geometric mean over voiced frames,
the natural centering on a log scale; a fixed override is available since
corpora rarely document a reference.

Frame membership in a character span uses the half-open interval
[start, end) so adjacent spans partition a pitch track.  Characters whose
span contains no voiced frame get absent pitch fields, not sentinels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .markup import AnnotatedSentence, ProsodyLevel


class NonPositiveFrequency(ValueError):
    """Frequency must be > 0 Hz to sit on the log scale."""


class NoVoicedFrames(ValueError):
    """A reference frequency needs at least one voiced frame."""


class LengthMismatch(ValueError):
    """Characters, spans, and pinyin syllables disagree in count."""


@dataclass(frozen=True)
class PitchTrack:
    """Frame-level pitch: (time_sec, f_hz) with f_hz == 0 meaning unvoiced."""

    frames: tuple[tuple[float, float], ...]
    frame_shift: float

    def __post_init__(self) -> None:
        if self.frame_shift <= 0:
            raise ValueError("frame_shift must be positive")
        last = None
        for t, f in self.frames:
            if last is not None and t <= last:
                raise ValueError("frame times must be strictly increasing")
            if f < 0:
                raise ValueError("frequency must be >= 0 (0 means unvoiced)")
            last = t

    def voiced(self) -> list[float]:
        return [f for _, f in self.frames if f > 0]

    def voiced_in(self, start: float, end: float) -> list[float]:
        """Voiced frequencies of frames with start <= time < end."""
        return [f for t, f in self.frames if start <= t < end and f > 0]


@dataclass(frozen=True)
class CharSpan:
    """Time span of one character, with its pinyin syllable."""

    char: str
    start: float
    end: float
    pinyin: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span [{self.start}, {self.end}) for {self.char!r}")


@dataclass(frozen=True)
class ReferenceF0:
    """Anchor frequency of the D-value scale."""

    f0: float
    method: str = "fixed"  # "geometric_mean_voiced" or "fixed"

    def __post_init__(self) -> None:
        if not (self.f0 > 0 and math.isfinite(self.f0)):
            raise ValueError("reference f0 must be finite and positive")


@dataclass(frozen=True)
class FeatureRecord:
    """Features of one character.

    ``d_high``/``d_low`` are both None for unvoiced characters.  The other
    Optional fields exist only so leniently decoded model output can be
    represented; records built by extraction are always complete.
    """

    char: str
    duration_ms: int | None
    pinyin: str | None
    prosody: ProsodyLevel | None
    d_high: float | None
    d_low: float | None

    @property
    def is_complete(self) -> bool:
        return None not in (self.duration_ms, self.pinyin, self.prosody)


FeatureSequence = tuple[FeatureRecord, ...]


def hz_to_d(f: float, ref: ReferenceF0) -> float:
    """D-value of a frequency: 5 * log2(f / ref.f0)."""
    if f <= 0:
        raise NonPositiveFrequency(f"frequency must be positive, got {f}")
    return 5.0 * math.log2(f / ref.f0)


def d_to_hz(d: float, ref: ReferenceF0) -> float:
    """Analytic inverse of :func:`hz_to_d`."""
    return ref.f0 * 2.0 ** (d / 5.0)


def reference_f0(
    tracks: PitchTrack | Iterable[PitchTrack],
    method: str = "geometric_mean_voiced",
    f0: float | None = None,
) -> ReferenceF0:
    """Choose the D-value reference for a track or a corpus of tracks.

    ``geometric_mean_voiced`` takes exp(mean(ln f)) over every voiced
    frame; ``fixed`` returns the caller-supplied constant unchanged.
    """
    if method == "fixed":
        if f0 is None:
            raise ValueError("fixed method requires an explicit f0")
        return ReferenceF0(f0, "fixed")
    if method != "geometric_mean_voiced":
        raise ValueError(f"unknown reference method {method!r}")
    if isinstance(tracks, PitchTrack):
        tracks = [tracks]
    log_sum = 0.0
    count = 0
    for track in tracks:
        for f in track.voiced():
            log_sum += math.log(f)
            count += 1
    if count == 0:
        raise NoVoicedFrames("no voiced frames in any track")
    return ReferenceF0(math.exp(log_sum / count), "geometric_mean_voiced")


def extract_char_features(
    span: CharSpan, track: PitchTrack, ref: ReferenceF0, prosody: ProsodyLevel
) -> FeatureRecord:
    """Features of one character from its span and the sentence pitch track."""
    duration_ms = max(1, round((span.end - span.start) * 1000.0))
    voiced = track.voiced_in(span.start, span.end)
    if voiced:
        d_high = hz_to_d(max(voiced), ref)
        d_low = hz_to_d(min(voiced), ref)
    else:
        d_high = d_low = None
    return FeatureRecord(
        char=span.char,
        duration_ms=duration_ms,
        pinyin=span.pinyin,
        prosody=prosody,
        d_high=d_high,
        d_low=d_low,
    )


def build_feature_sequence(
    annotated: AnnotatedSentence,
    spans: Sequence[CharSpan],
    pinyin: Sequence[str],
    track: PitchTrack,
    ref: ReferenceF0,
) -> FeatureSequence:
    """One complete FeatureRecord per character, in sentence order.

    ``pinyin`` overrides the syllables carried on the spans (corpus index
    files are authoritative).  Raises LengthMismatch when characters,
    spans, and pinyin syllables disagree in count.
    """
    n = len(annotated)
    if len(spans) != n or len(pinyin) != n:
        raise LengthMismatch(
            f"{n} characters vs {len(spans)} spans vs {len(pinyin)} pinyin syllables"
        )
    records = []
    for i in range(n):
        rec = extract_char_features(spans[i], track, ref, annotated.boundaries[i])
        records.append(
            FeatureRecord(
                char=annotated.chars[i],
                duration_ms=rec.duration_ms,
                pinyin=pinyin[i],
                prosody=rec.prosody,
                d_high=rec.d_high,
                d_low=rec.d_low,
            )
        )
    return tuple(records)
