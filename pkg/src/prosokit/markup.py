"""Prosodic-structure markup: parse, render, and interpret ``#n`` annotations.

Mandarin TTS corpora mark prosodic boundaries inline: ``#1`` after a
prosodic word (PW), ``#2`` after a prosodic phrase (PPH), ``#3`` after an
intonation phrase (IPH), and ``#4`` at sentence end.  ``#4`` carries no
information once sentences are isolated, so it is discarded on parse (a
count is kept for corpus validation).

Boundaries are stored per gap: ``boundaries[i]`` is the level of the
boundary immediately after ``chars[i]``.  Characters are Unicode scalar
values, not grapheme clusters; Chinese text in scope maps 1:1 between
characters and syllables.  Round-trip identities hold for text whose
characters do not themselves contain ``#`` or whitespace adjacent to a
marker (canonical rendering never emits either).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, Literal

Policy = Literal["strict", "lenient"]

_MARKER_RE = re.compile(r"[ \t\r\n\f\v]*#(\d)[ \t\r\n\f\v]*")


class MarkupError(ValueError):
    """Base class for markup parse failures."""


class EmptySentence(MarkupError):
    """Input contains no characters once markers are removed."""


class MalformedMarker(MarkupError):
    """Marker violates the grammar (bad level, leading or trailing position)."""


class DuplicateBoundary(MalformedMarker):
    """Two markers occupy the same gap."""


class ProsodyLevel(IntEnum):
    """Boundary levels of the three-layer Mandarin prosodic hierarchy."""

    NONE = 0
    PW = 1
    PPH = 2
    IPH = 3


@dataclass(frozen=True)
class AnnotatedSentence:
    """Character sequence plus a boundary level for the gap after each character.

    A canonical sentence has ``boundaries[-1] == ProsodyLevel.NONE``
    (sentence-end markers are dropped); lenient parsing may retain a
    trailing non-final marker there.
    """

    chars: tuple[str, ...]
    boundaries: tuple[ProsodyLevel, ...]

    def __post_init__(self) -> None:
        if len(self.chars) == 0:
            raise EmptySentence("sentence must contain at least one character")
        if len(self.boundaries) != len(self.chars):
            raise ValueError(
                f"boundaries length {len(self.boundaries)} != chars length {len(self.chars)}"
            )
        for ch in self.chars:
            if len(ch) != 1:
                raise ValueError(f"chars must be single Unicode scalar values, got {ch!r}")

    @property
    def text(self) -> str:
        """Plain text with no markers."""
        return "".join(self.chars)

    def __len__(self) -> int:
        return len(self.chars)


@dataclass
class ParseDiagnostics:
    """Counts of tolerated irregularities collected while parsing."""

    sentence_end_markers: int = 0  # '#4' occurrences (discarded in all policies)
    dropped_unknown: int = 0  # lenient: '#0', '#5'..'#9'
    dropped_duplicate: int = 0  # lenient: second marker in one gap
    dropped_leading: int = 0  # lenient: marker before the first character

    @property
    def warnings(self) -> int:
        return self.dropped_unknown + self.dropped_duplicate + self.dropped_leading


def _tokenize(text: str) -> Iterator[tuple[str, str]]:
    """Yield ("char", c) and ("marker", digit) tokens.

    Whitespace adjacent to a marker belongs to the marker token and is
    dropped; all other characters, including whitespace and a ``#`` not
    followed by a digit, are character tokens.
    """
    pos = 0
    for m in _MARKER_RE.finditer(text):
        for ch in text[pos : m.start()]:
            yield ("char", ch)
        yield ("marker", m.group(1))
        pos = m.end()
    for ch in text[pos:]:
        yield ("char", ch)


def parse_with_diagnostics(
    text: str, policy: Policy = "strict"
) -> tuple[AnnotatedSentence, ParseDiagnostics]:
    """Parse markup text, returning the sentence and irregularity counts.

    ``#4`` is discarded (and counted) in both policies before any grammar
    check.  In ``strict`` policy, a ``#`` not followed by a digit, an
    unknown level, a marker before the first character, a second marker in
    the same gap, or a sentence-final marker other than ``#4`` is an
    error.  In ``lenient`` policy those are dropped with a warning count,
    except that a bare ``#`` becomes a regular character and a trailing
    marker is retained on the final gap.

    Raises EmptySentence when no characters remain, in either policy.
    """
    diag = ParseDiagnostics()
    chars: list[str] = []
    levels: dict[int, ProsodyLevel] = {}  # gap index -> level
    last_marker_gap = -2  # gap of the most recent retained marker

    for kind, value in _tokenize(text):
        if kind == "char":
            if policy == "strict" and value == "#":
                raise MalformedMarker("'#' must be followed by a digit")
            chars.append(value)
            continue
        k = int(value)
        if k == 4:
            diag.sentence_end_markers += 1
            continue
        if k not in (1, 2, 3):
            if policy == "strict":
                raise MalformedMarker(f"unknown boundary level #{k}")
            diag.dropped_unknown += 1
            continue
        gap = len(chars) - 1
        if gap < 0:
            if policy == "strict":
                raise MalformedMarker("marker precedes the first character")
            diag.dropped_leading += 1
            continue
        if gap in levels:
            if policy == "strict":
                raise DuplicateBoundary(f"two markers in the gap after character {gap}")
            diag.dropped_duplicate += 1
            continue
        levels[gap] = ProsodyLevel(k)
        last_marker_gap = gap

    if not chars:
        raise EmptySentence("no characters in input")
    n = len(chars)
    if last_marker_gap == n - 1 and policy == "strict":
        raise MalformedMarker("sentence-final marker must be #4")
    boundaries = tuple(levels.get(i, ProsodyLevel.NONE) for i in range(n))
    return AnnotatedSentence(tuple(chars), boundaries), diag


def parse_annotated(text: str, policy: Policy = "strict") -> AnnotatedSentence:
    """Parse markup text into an :class:`AnnotatedSentence` (diagnostics dropped)."""
    sentence, _ = parse_with_diagnostics(text, policy)
    return sentence


def render_annotated(sentence: AnnotatedSentence) -> str:
    """Inverse of parsing: characters interleaved with ``#n`` markers, no ``#4``."""
    parts: list[str] = []
    for ch, level in zip(sentence.chars, sentence.boundaries):
        parts.append(ch)
        if level is not ProsodyLevel.NONE:
            parts.append(f"#{level.value}")
    return "".join(parts)


def strip_markup(text: str) -> str:
    """Remove every ``#n`` marker (and its adjacent whitespace), keep all else."""
    return _MARKER_RE.sub("", text)


@dataclass(frozen=True)
class ProsodicPhrase:
    """A PPH constituent: contiguous prosodic-word ranges (half-open char indices)."""

    words: tuple[tuple[int, int], ...]

    @property
    def start(self) -> int:
        return self.words[0][0]

    @property
    def end(self) -> int:
        return self.words[-1][1]


@dataclass(frozen=True)
class IntonationPhrase:
    """An IPH constituent: contiguous prosodic phrases."""

    phrases: tuple[ProsodicPhrase, ...]

    @property
    def start(self) -> int:
        return self.phrases[0].start

    @property
    def end(self) -> int:
        return self.phrases[-1].end


@dataclass(frozen=True)
class ProsodicTree:
    """Three-layer constituent tree: IPH > PPH > PW over character indices."""

    n_chars: int
    iphs: tuple[IntonationPhrase, ...]

    def leaf_ranges(self) -> list[tuple[int, int]]:
        """Prosodic-word ranges in order; they partition [0, n_chars)."""
        return [w for iph in self.iphs for pph in iph.phrases for w in pph.words]

    def flatten(self) -> tuple[ProsodyLevel, ...]:
        """Recover per-gap boundary levels (canonical: final gap is NONE)."""
        levels = [ProsodyLevel.NONE] * self.n_chars
        for iph in self.iphs:
            for pph in iph.phrases:
                for _, end in pph.words:
                    if end < self.n_chars:
                        levels[end - 1] = ProsodyLevel.PW
                if pph.end < self.n_chars:
                    levels[pph.end - 1] = ProsodyLevel.PPH
            if iph.end < self.n_chars:
                levels[iph.end - 1] = ProsodyLevel.IPH
        return tuple(levels)


def _cuts(boundaries: tuple[ProsodyLevel, ...], lo: int, hi: int, level: ProsodyLevel) -> list[int]:
    ends = [i + 1 for i in range(lo, hi - 1) if boundaries[i] >= level]
    ends.append(hi)
    return ends


def to_tree(sentence: AnnotatedSentence) -> ProsodicTree:
    """Build the constituent tree by hierarchical subsumption.

    A boundary of level m closes every constituent of level <= m, so IPHs
    end at gaps marked >= IPH (and at sentence end), PPHs within an IPH at
    gaps >= PPH, and PWs within a PPH at gaps >= PW.
    """
    n = len(sentence)
    b = sentence.boundaries
    iphs: list[IntonationPhrase] = []
    iph_start = 0
    for iph_end in _cuts(b, 0, n, ProsodyLevel.IPH):
        phrases: list[ProsodicPhrase] = []
        pph_start = iph_start
        for pph_end in _cuts(b, iph_start, iph_end, ProsodyLevel.PPH):
            words: list[tuple[int, int]] = []
            pw_start = pph_start
            for pw_end in _cuts(b, pph_start, pph_end, ProsodyLevel.PW):
                words.append((pw_start, pw_end))
                pw_start = pw_end
            phrases.append(ProsodicPhrase(tuple(words)))
            pph_start = pph_end
        iphs.append(IntonationPhrase(tuple(phrases)))
        iph_start = iph_end
    return ProsodicTree(n, tuple(iphs))
