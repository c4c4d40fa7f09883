"""Shared test utilities: generators and independent oracles.

Oracles here are deliberately written as naive enumerations, separate
from the library's implementations, so tests compare two code paths.
"""

from __future__ import annotations

import random
from functools import lru_cache
from itertools import combinations
from pathlib import Path

from prosokit.features import FeatureRecord
from prosokit.markup import AnnotatedSentence, ProsodyLevel, render_annotated

CJK_POOL = "天地人山水火木金土日月星云风雨雪电春夏秋冬东南西北中大小多少高低长短红黄蓝绿白黑"

LEVELS = (ProsodyLevel.NONE, ProsodyLevel.PW, ProsodyLevel.PPH, ProsodyLevel.IPH)

SYLLABLES = (
    "ba1 ma2 de5 li4 shan1 shui3 huo3 mu4 jin1 tu3 ri4 yue4 xing1 yun2 feng1 yu3 "
    "xue3 dian4 chun1 xia4 qiu1 dong1 zhong4 da4 xiao3 duo1 shao3 gao1 di1 hong2"
).split()


def random_sentence(rng: random.Random, max_len: int = 30) -> AnnotatedSentence:
    """Canonical random sentence: random levels everywhere, final gap NONE."""
    n = rng.randint(1, max_len)
    chars = tuple(rng.choice(CJK_POOL) for _ in range(n))
    boundaries = tuple(rng.choice(LEVELS) for _ in range(n - 1)) + (ProsodyLevel.NONE,)
    return AnnotatedSentence(chars, boundaries)


def random_markup_pair(rng: random.Random, max_len: int = 10) -> tuple[str, str]:
    """(pred, ref) markup strings over the same characters, boundaries random."""
    ref = random_sentence(rng, max_len)
    pred_boundaries = tuple(rng.choice(LEVELS) for _ in range(len(ref) - 1)) + (ProsodyLevel.NONE,)
    pred = AnnotatedSentence(ref.chars, pred_boundaries)
    return render_annotated(pred), render_annotated(ref)


def oracle_boundary_counts(pred: AnnotatedSentence, ref: AnnotatedSentence, mode: str):
    """Gap-by-gap set enumeration, independent of scoring.boundary_counts."""
    out = {}
    n = len(ref)
    for level in (ProsodyLevel.PW, ProsodyLevel.PPH, ProsodyLevel.IPH):
        pred_gaps = set()
        ref_gaps = set()
        for gap in range(n):
            for sentence, bucket in ((pred, pred_gaps), (ref, ref_gaps)):
                b = sentence.boundaries[gap]
                hit = b >= level if mode == "cumulative" else b == level
                if hit:
                    bucket.add(gap)
        out[level] = (
            len(pred_gaps & ref_gaps),
            len(pred_gaps - ref_gaps),
            len(ref_gaps - pred_gaps),
        )
    return out


def brute_force_lcs(a: str, b: str) -> tuple[int, tuple[tuple[int, int], ...]]:
    """All-subsequence enumeration: maximal common length and the
    lexicographically smallest index trace.  Exponential; keep inputs tiny."""
    best_len = 0
    best_trace: tuple[tuple[int, int], ...] | None = None
    by_string: dict[str, list[tuple[int, ...]]] = {}
    for size in range(len(b), -1, -1):
        for idxs in combinations(range(len(b)), size):
            by_string.setdefault("".join(b[i] for i in idxs), []).append(idxs)
    for size in range(len(a), 0, -1):
        if best_trace is not None and size < best_len:
            break
        for a_idxs in combinations(range(len(a)), size):
            s = "".join(a[i] for i in a_idxs)
            for b_idxs in by_string.get(s, ()):
                trace = tuple(zip(a_idxs, b_idxs))
                if size > best_len or (size == best_len and (best_trace is None or trace < best_trace)):
                    best_len = size
                    best_trace = trace
    return best_len, best_trace if best_trace is not None else ()


def oracle_min_trace(a: str, b: str) -> tuple[int, tuple[tuple[int, int], ...]]:
    """Memoized recursion over the LCS recurrence; minimal trace among maxima."""

    @lru_cache(maxsize=None)
    def best(i: int, j: int):
        if i == len(a) or j == len(b):
            return 0, ()
        options = []
        if a[i] == b[j]:
            ln, tr = best(i + 1, j + 1)
            options.append((ln + 1, ((i, j),) + tr))
        ln, tr = best(i + 1, j)
        options.append((ln, tr))
        ln, tr = best(i, j + 1)
        options.append((ln, tr))
        top = max(ln for ln, _ in options)
        return top, min(tr for ln, tr in options if ln == top)

    result = best(0, 0)
    best.cache_clear()
    return result


def random_feature_sequence(rng: random.Random, max_len: int = 12):
    """(response, features) with complete records; some characters unvoiced."""
    n = rng.randint(1, max_len)
    records = []
    for _ in range(n):
        char = rng.choice(CJK_POOL)
        if rng.random() < 0.2:
            d_high = d_low = None
        else:
            d_low = round(rng.uniform(-12.0, 8.0), 2)
            d_high = round(d_low + rng.uniform(0.0, 6.0), 2)
        records.append(
            FeatureRecord(
                char=char,
                duration_ms=rng.randint(1, 900),
                pinyin=rng.choice(SYLLABLES),
                prosody=rng.choice(LEVELS),
                d_high=d_high,
                d_low=d_low,
            )
        )
    features = tuple(records)
    return "".join(r.char for r in features), features


def write_synthetic_corpus(root: Path, n: int, seed: int = 0) -> Path:
    """Index-only corpus with unique sentences (enough for prosody work)."""
    rng = random.Random(seed)
    lines = []
    seen_texts = set()
    i = 0
    while len(lines) < n:
        sentence = random_sentence(rng, max_len=12)
        if len(sentence) < 3 or sentence.text in seen_texts:
            i += 1
            continue
        seen_texts.add(sentence.text)
        pinyin = " ".join(SYLLABLES[k % len(SYLLABLES)] for k in range(len(sentence)))
        lines.append(f"s{len(lines):04d}\t{render_annotated(sentence)}\t{pinyin}")
    root.mkdir(parents=True, exist_ok=True)
    (root / "index.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root
