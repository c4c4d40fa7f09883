"""Corpus ingestion, validation, and deterministic splitting.

On-disk layout (UTF-8 throughout)::

    <root>/index.tsv            id <TAB> annotated_text <TAB> pinyin (space separated)
    <root>/intervals/<id>.tsv   char <TAB> start_sec <TAB> end_sec <TAB> pinyin
    <root>/pitch/<id>.tsv       time_sec <TAB> f_hz        (f_hz == 0: unvoiced)

Interval and pitch files are optional per sample; samples missing them
(or failing character-count consistency) remain loaded for prosody work
but are flagged not feature-ready.

Splitting shuffles lexicographically sorted ids with the toolkit's pinned
Fisher-Yates/splitmix64 shuffle, then assigns contiguous runs to train,
validation, and test, with the integer remainder going to train, so
identical seeds reproduce identical splits on any platform.

A 12-sample synthetic fixture corpus ships with the package so every
pipeline runs offline; see :func:`fixture_corpus_path`.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .features import (
    CharSpan,
    FeatureSequence,
    PitchTrack,
    ReferenceF0,
    build_feature_sequence,
    reference_f0,
)
from .markup import (
    AnnotatedSentence,
    EmptySentence,
    parse_with_diagnostics,
    render_annotated,
)

INDEX_FILENAME = "index.tsv"
_DEFAULT_FRAME_SHIFT = 0.01


class MissingIndex(FileNotFoundError):
    """Corpus root has no index file."""


class NoSamples(ValueError):
    """Index file produced no usable samples."""


class TooFewSamples(ValueError):
    """Not enough samples to split three ways."""


class UnknownId(KeyError):
    """Referenced sample id is not in the corpus."""


@dataclass(frozen=True)
class CorpusSample:
    id: str
    annotated: AnnotatedSentence
    pinyin: tuple[str, ...]
    spans: tuple[CharSpan, ...] | None = None
    pitch: PitchTrack | None = None
    context_utterance: str | None = None
    response_features: FeatureSequence | None = None
    feature_ready: bool = False

    @property
    def text(self) -> str:
        return self.annotated.text

    @property
    def markup(self) -> str:
        return render_annotated(self.annotated)


@dataclass
class ValidationReport:
    n_samples: int = 0
    sentence_end_discards: int = 0  # '#4' markers dropped
    markup_warnings: int = 0
    length_mismatches: int = 0
    pinyin_disagreements: int = 0  # interval-file pinyin != index pinyin
    missing_intervals: int = 0
    missing_pitch: int = 0
    malformed_lines: int = 0
    parse_failures: int = 0

    @property
    def errors(self) -> int:
        return self.malformed_lines + self.parse_failures

    def as_dict(self) -> dict[str, int]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Corpus:
    samples: tuple[CorpusSample, ...]
    report: ValidationReport

    def __len__(self) -> int:
        return len(self.samples)

    def by_id(self) -> dict[str, CorpusSample]:
        return {s.id: s for s in self.samples}

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]


def _read_intervals(path: Path, report: ValidationReport) -> tuple[CharSpan, ...] | None:
    spans = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            report.malformed_lines += 1
            continue
        char, start, end, pinyin = fields
        try:
            spans.append(CharSpan(char, float(start), float(end), pinyin))
        except ValueError:
            report.malformed_lines += 1
    return tuple(spans) if spans else None


def _read_pitch(path: Path, report: ValidationReport) -> PitchTrack | None:
    frames = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            report.malformed_lines += 1
            continue
        try:
            frames.append((float(fields[0]), float(fields[1])))
        except ValueError:
            report.malformed_lines += 1
    if not frames:
        return None
    diffs = sorted(b[0] - a[0] for a, b in zip(frames, frames[1:]))
    shift = diffs[len(diffs) // 2] if diffs else _DEFAULT_FRAME_SHIFT
    return PitchTrack(tuple(frames), shift if shift > 0 else _DEFAULT_FRAME_SHIFT)


def load_corpus(root: str | Path) -> Corpus:
    """Load and validate a corpus directory (lenient: collect, don't fail)."""
    root = Path(root)
    index = root / INDEX_FILENAME
    if not index.is_file():
        raise MissingIndex(f"no {INDEX_FILENAME} in {root}")
    report = ValidationReport()
    samples: list[CorpusSample] = []
    for line in index.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            report.malformed_lines += 1
            continue
        sample_id, annotated_text, pinyin_field = fields
        try:
            annotated, diag = parse_with_diagnostics(annotated_text, "lenient")
        except EmptySentence:
            report.parse_failures += 1
            continue
        report.sentence_end_discards += diag.sentence_end_markers
        report.markup_warnings += diag.warnings
        pinyin = tuple(pinyin_field.split())

        interval_path = root / "intervals" / f"{sample_id}.tsv"
        pitch_path = root / "pitch" / f"{sample_id}.tsv"
        spans = _read_intervals(interval_path, report) if interval_path.is_file() else None
        if spans is None:
            report.missing_intervals += 1
        pitch = _read_pitch(pitch_path, report) if pitch_path.is_file() else None
        if pitch is None:
            report.missing_pitch += 1

        n = len(annotated)
        consistent = len(pinyin) == n and (spans is None or len(spans) == n)
        if not consistent:
            report.length_mismatches += 1
        elif spans is not None:
            for span, idx_pinyin in zip(spans, pinyin):
                if span.pinyin != idx_pinyin:
                    report.pinyin_disagreements += 1
        samples.append(
            CorpusSample(
                id=sample_id,
                annotated=annotated,
                pinyin=pinyin,
                spans=spans,
                pitch=pitch,
                feature_ready=consistent and spans is not None and pitch is not None,
            )
        )
    if not samples:
        raise NoSamples(f"index {index} contains no usable samples")
    report.n_samples = len(samples)
    return Corpus(tuple(samples), report)


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test ratios plus the shuffle seed.

    Sizes are floor(n * ratio) per split with the remainder assigned to
    train.  Build from an integer ratio string ("8:1:1") when exactness
    matters; float ratios are floored with a 1e-9 guard against binary
    representation error.
    """

    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    weights: tuple[int, int, int] | None = None

    def __post_init__(self) -> None:
        if any(r <= 0 for r in self.ratios):
            raise ValueError("all ratios must be positive")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError("ratios must sum to 1")

    @classmethod
    def from_string(cls, text: str, seed: int = 0) -> "SplitSpec":
        parts = [int(p) for p in text.split(":")]
        if len(parts) != 3 or any(p <= 0 for p in parts):
            raise ValueError(f"ratio string must be three positive integers a:b:c, got {text!r}")
        total = sum(parts)
        return cls(
            ratios=tuple(p / total for p in parts),  # type: ignore[arg-type]
            seed=seed,
            weights=(parts[0], parts[1], parts[2]),
        )

    def sizes(self, n: int) -> tuple[int, int, int]:
        if self.weights is not None:
            total = sum(self.weights)
            valid = n * self.weights[1] // total
            test = n * self.weights[2] // total
        else:
            valid = math.floor(n * self.ratios[1] + 1e-9)
            test = math.floor(n * self.ratios[2] + 1e-9)
        return n - valid - test, valid, test


def split_ids(ids: Sequence[str], spec: SplitSpec) -> tuple[list[str], list[str], list[str]]:
    """Deterministic id split: sort, pinned shuffle, contiguous assignment."""
    from .rng import shuffled

    if len(ids) < 3:
        raise TooFewSamples(f"need at least 3 samples to split, got {len(ids)}")
    order = shuffled(sorted(ids), spec.seed)
    n_train, n_valid, _ = spec.sizes(len(order))
    return (
        order[:n_train],
        order[n_train : n_train + n_valid],
        order[n_train + n_valid :],
    )


def split_corpus(
    corpus: Corpus, spec: SplitSpec
) -> tuple[list[CorpusSample], list[CorpusSample], list[CorpusSample]]:
    """Split a corpus into (train, valid, test) sample lists."""
    train_ids, valid_ids, test_ids = split_ids(corpus.ids(), spec)
    by_id = corpus.by_id()
    return (
        [by_id[i] for i in train_ids],
        [by_id[i] for i in valid_ids],
        [by_id[i] for i in test_ids],
    )


def split_manifest(
    spec: SplitSpec, train: Sequence[str], valid: Sequence[str], test: Sequence[str]
) -> dict[str, object]:
    return {
        "seed": spec.seed,
        "ratios": list(spec.ratios),
        "train": list(train),
        "valid": list(valid),
        "test": list(test),
    }


def save_manifest(manifest: Mapping[str, object], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_manifest(path: str | Path) -> dict[str, object]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def attach_contexts(corpus: Corpus, contexts: Mapping[str, str]) -> Corpus:
    """Return a corpus whose samples carry the given context utterances."""
    by_id = corpus.by_id()
    for sample_id in contexts:
        if sample_id not in by_id:
            raise UnknownId(sample_id)
    samples = tuple(
        dataclasses.replace(s, context_utterance=contexts[s.id]) if s.id in contexts else s
        for s in corpus.samples
    )
    return Corpus(samples, corpus.report)


def corpus_reference_f0(
    corpus: Corpus, method: str = "geometric_mean_voiced", f0: float | None = None
) -> ReferenceF0:
    """Corpus-level D-value reference (single-speaker corpora assumed)."""
    if method == "fixed":
        return reference_f0((), "fixed", f0)
    tracks = [s.pitch for s in corpus.samples if s.pitch is not None]
    return reference_f0(tracks, method)


def with_features(corpus: Corpus, ref: ReferenceF0) -> Corpus:
    """Populate ``response_features`` on every feature-ready sample."""
    samples = []
    for s in corpus.samples:
        if s.feature_ready and s.spans is not None and s.pitch is not None:
            features = build_feature_sequence(s.annotated, s.spans, s.pinyin, s.pitch, ref)
            samples.append(dataclasses.replace(s, response_features=features))
        else:
            samples.append(s)
    return Corpus(tuple(samples), corpus.report)


def sample_features(sample: CorpusSample, ref: ReferenceF0) -> FeatureSequence:
    """Feature sequence of one feature-ready sample."""
    if not (sample.feature_ready and sample.spans and sample.pitch):
        raise ValueError(f"sample {sample.id} is not feature-ready")
    return build_feature_sequence(sample.annotated, sample.spans, sample.pinyin, sample.pitch, ref)


def fixture_corpus_path() -> Path:
    """Path of the bundled 12-sample synthetic corpus."""
    return Path(str(resources.files("prosokit").joinpath("data/fixture_corpus")))


def load_fixture_corpus() -> Corpus:
    return load_corpus(fixture_corpus_path())


def fixture_contexts() -> dict[str, str]:
    """Bundled invented context utterances for the fixture corpus."""
    path = fixture_corpus_path() / "contexts.json"
    return json.loads(path.read_text(encoding="utf-8"))
