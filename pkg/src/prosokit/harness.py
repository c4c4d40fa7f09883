"""Experiment orchestration: PSP evaluation, ablation grids, context
generation, and joint response/feature evaluation.

Every run here is a pure function of (corpus, configuration, backend), so
runs against the mock backend are bit-reproducible.  Completions can be
cached keyed by model name + prompt digest (+ prefix); cache hits never
change metrics because completions are deterministic at temperature 0.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .codec import (
    JointReport,
    JointTarget,
    aggregate_joint,
    eval_joint_sample,
)
from .corpus import Corpus, CorpusSample, SplitSpec, split_corpus
from .llm import Backend, CompletionResult, complete_batch
from .prompting import (
    DemoSelection,
    KnowledgeConfig,
    Prompt,
    build_context_prompt,
    build_psp_prompt,
    demo_pairs,
    select_demos,
)
from .scoring import Aggregation, CorpusScore, corpus_fscore


class CachingBackend:
    """Wraps a backend with an in-memory (optionally disk-backed) cache.

    Keys are ``model_name:prompt_digest[:prefix_digest]``.  Error results
    are never cached.
    """

    def __init__(self, inner: Backend, model_name: str, cache_dir: str | Path | None = None) -> None:
        self.inner = inner
        self.model_name = model_name
        self._lock = threading.Lock()
        self._cache: dict[str, str] = {}
        self._path = Path(cache_dir) / "completions.jsonl" if cache_dir else None
        self.hits = 0
        self.misses = 0
        if self._path is not None and self._path.is_file():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    entry = json.loads(line)
                    self._cache[entry["key"]] = entry["text"]

    def _key(self, prompt: Prompt, prefix: str | None) -> str:
        key = f"{self.model_name}:{prompt.digest()}"
        if prefix is not None:
            key += ":" + hashlib.sha256(prefix.encode()).hexdigest()[:16]
        return key

    def complete(self, prompt: Prompt, *, prefix: str | None = None) -> CompletionResult:
        key = self._key(prompt, prefix)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            with self._lock:
                self.hits += 1
            return CompletionResult(cached, "stop", 0.0, 1)
        result = self.inner.complete(prompt, prefix=prefix)
        with self._lock:
            self.misses += 1
            if result.finish_reason != "error":
                self._cache[key] = result.text
                if self._path is not None:
                    self._path.parent.mkdir(parents=True, exist_ok=True)
                    with open(self._path, "a", encoding="utf-8") as fh:
                        fh.write(json.dumps({"key": key, "text": result.text}, ensure_ascii=False) + "\n")
        return result


def psp_prompts(
    samples: Sequence[CorpusSample],
    knowledge: KnowledgeConfig,
    demos: Sequence[tuple[str, str]],
) -> list[Prompt]:
    return [build_psp_prompt(s.text, knowledge, demos) for s in samples]


@dataclass(frozen=True)
class PspRun:
    """One demonstration draw evaluated over the whole eval split."""

    cumulative: CorpusScore
    exact: CorpusScore
    predictions: tuple[str, ...]


@dataclass(frozen=True)
class PspEvalOutcome:
    sample_ids: tuple[str, ...]
    references: tuple[str, ...]
    runs: tuple[PspRun, ...]
    aggregation: Aggregation
    prompt_message_count: int


def run_psp_eval(
    corpus: Corpus,
    split_spec: SplitSpec,
    demo_sel: DemoSelection,
    knowledge: KnowledgeConfig,
    backend: Backend,
    parallelism: int = 4,
    eval_split: str = "test",
    aggregation: Aggregation = "micro",
) -> PspEvalOutcome:
    """The prosody-prediction benchmark protocol.

    Demonstrations come from the training split (one prompt per eval
    sample per draw); predictions are parsed leniently and scored in both
    counting modes.  Model failures score as misses, never abort the run.
    """
    train, valid, test = split_corpus(corpus, split_spec)
    eval_samples = {"train": train, "valid": valid, "test": test}[eval_split]
    draws = select_demos(train, demo_sel)
    references = tuple(s.markup for s in eval_samples)
    runs = []
    message_count = 0
    for draw in draws:
        demos = demo_pairs(draw)
        prompts = psp_prompts(eval_samples, knowledge, demos)
        message_count = len(prompts[0].messages) if prompts else 0
        results = complete_batch(backend, prompts, parallelism)
        predictions = tuple(r.text for r in results)
        pairs = list(zip(predictions, references))
        runs.append(
            PspRun(
                cumulative=corpus_fscore(pairs, "cumulative", aggregation),
                exact=corpus_fscore(pairs, "exact", aggregation),
                predictions=predictions,
            )
        )
    return PspEvalOutcome(
        sample_ids=tuple(s.id for s in eval_samples),
        references=references,
        runs=tuple(runs),
        aggregation=aggregation,
        prompt_message_count=message_count,
    )


ABLATION_SHOT_COUNTS = (0, 4, 8, 16)


@dataclass(frozen=True)
class AblationCell:
    label: str
    k: int
    knowledge: KnowledgeConfig
    prompt_message_count: int
    cumulative: CorpusScore
    exact: CorpusScore


@dataclass(frozen=True)
class AblationOutcome:
    cells: tuple[AblationCell, ...]
    backend_requests: int


def ablation_cells(knowledge_k: int = 16) -> list[tuple[str, int, KnowledgeConfig]]:
    """The declared grid: shot counts x knowledge on/off, plus per-level
    knowledge removal variants at a fixed shot count."""
    cells: list[tuple[str, int, KnowledgeConfig]] = []
    for k in ABLATION_SHOT_COUNTS:
        cells.append((f"k={k} w/ knowledge", k, KnowledgeConfig()))
        cells.append((f"k={k} w/o knowledge", k, KnowledgeConfig.none()))
    cells.append((f"k={knowledge_k} w/o #1", knowledge_k, KnowledgeConfig(include_pw=False)))
    cells.append((f"k={knowledge_k} w/o #2", knowledge_k, KnowledgeConfig(include_pph=False)))
    cells.append((f"k={knowledge_k} w/o #3", knowledge_k, KnowledgeConfig(include_iph=False)))
    cells.append((f"k={knowledge_k} all", knowledge_k, KnowledgeConfig()))
    return cells


def run_ablation(
    corpus: Corpus,
    split_spec: SplitSpec,
    demo_seed: int,
    backend: Backend,
    model_name: str = "default",
    parallelism: int = 4,
    eval_split: str = "test",
    aggregation: Aggregation = "micro",
    knowledge_k: int = 16,
) -> AblationOutcome:
    """Run the 12-cell ablation grid with one shared demonstration draw.

    Each cell uses the first ``k`` demonstrations of a single draw of the
    largest shot count, so prompts coincide between identical cells and
    hit the shared completion cache.
    """
    train, valid, test = split_corpus(corpus, split_spec)
    eval_samples = {"train": train, "valid": valid, "test": test}[eval_split]
    references = tuple(s.markup for s in eval_samples)
    max_k = max(max(ABLATION_SHOT_COUNTS), knowledge_k)
    (draw,) = select_demos(train, DemoSelection(k=max_k, seed=demo_seed))
    all_demos = demo_pairs(draw)
    cached = CachingBackend(backend, model_name)
    cells = []
    for label, k, knowledge in ablation_cells(knowledge_k):
        demos = all_demos[:k]
        prompts = psp_prompts(eval_samples, knowledge, demos)
        results = complete_batch(cached, prompts, parallelism)
        pairs = [(r.text, ref) for r, ref in zip(results, references)]
        cells.append(
            AblationCell(
                label=label,
                k=k,
                knowledge=knowledge,
                prompt_message_count=len(prompts[0].messages) if prompts else 0,
                cumulative=corpus_fscore(pairs, "cumulative", aggregation),
                exact=corpus_fscore(pairs, "exact", aggregation),
            )
        )
    return AblationOutcome(cells=tuple(cells), backend_requests=cached.misses)


def strip_context_reply(text: str) -> str:
    """Normalize a generated context utterance: drop the speaker tag and
    one pair of surrounding quotes."""
    s = text.strip()
    for tag in ("A:", "A："):
        if s.startswith(tag):
            s = s[len(tag) :].strip()
            break
    quote_pairs = {('"', '"'), ("'", "'"), ("“", "”"), ("「", "」")}
    if len(s) >= 2 and (s[0], s[-1]) in quote_pairs:
        s = s[1:-1]
    return s


@dataclass(frozen=True)
class ContextGenOutcome:
    contexts: dict[str, str]
    failures: int
    backend_requests: int


def run_gen_context(
    corpus: Corpus,
    backend: Backend,
    model_name: str = "default",
    parallelism: int = 4,
    cache_dir: str | Path | None = None,
) -> ContextGenOutcome:
    """Generate a dialogue-context utterance for every corpus sample."""
    cached = CachingBackend(backend, model_name, cache_dir)
    prompts = [build_context_prompt(s.text) for s in corpus.samples]
    results = complete_batch(cached, prompts, parallelism)
    contexts: dict[str, str] = {}
    failures = 0
    for sample, result in zip(corpus.samples, results):
        if result.finish_reason == "error" or not result.text.strip():
            failures += 1
            continue
        contexts[sample.id] = strip_context_reply(result.text)
    return ContextGenOutcome(contexts, failures, cached.misses)


PrefixMode = str  # "assistant_prefix" | "prepend"


@dataclass(frozen=True)
class JointSplitResult:
    report: JointReport | None  # None when the split had nothing to evaluate
    skipped: int  # samples without context or features
    n_evaluated: int


def run_joint_eval(
    corpus: Corpus,
    split_spec: SplitSpec,
    backend: Backend,
    splits: Sequence[str] = ("train", "test"),
    parallelism: int = 4,
    prefix_mode: PrefixMode = "assistant_prefix",
) -> dict[str, JointSplitResult]:
    """Joint response/feature evaluation with a ground-truth prefix.

    The reference response is always prepended to the raw completion
    before decoding; in ``assistant_prefix`` mode it is additionally sent
    to the backend as the beginning of the assistant turn.  The mode must
    be reported alongside the numbers: they are not comparable across
    modes.
    """
    if prefix_mode not in ("assistant_prefix", "prepend"):
        raise ValueError(f"unknown prefix mode {prefix_mode!r}")
    train, valid, test = split_corpus(corpus, split_spec)
    named = {"train": train, "valid": valid, "test": test}
    out: dict[str, JointSplitResult] = {}
    for split_name in splits:
        samples = named[split_name]
        eligible = [
            s for s in samples if s.context_utterance is not None and s.response_features is not None
        ]
        if not eligible:
            out[split_name] = JointSplitResult(report=None, skipped=len(samples), n_evaluated=0)
            continue
        prompts = [Prompt.single_user(s.context_utterance) for s in eligible]  # type: ignore[arg-type]
        prefixes = [s.text for s in eligible]
        sent_prefixes = prefixes if prefix_mode == "assistant_prefix" else [None] * len(eligible)
        results = complete_batch(backend, prompts, parallelism, prefixes=sent_prefixes)
        sample_results = []
        for sample, prefix, result in zip(eligible, prefixes, results):
            target = JointTarget(sample.text, sample.response_features)
            sample_results.append(eval_joint_sample(prefix + result.text, target))
        out[split_name] = JointSplitResult(
            report=aggregate_joint(sample_results),
            skipped=len(samples) - len(eligible),
            n_evaluated=len(eligible),
        )
    return out


# --- mock-backend wiring -----------------------------------------------------


def echo_fixtures_psp(
    eval_samples: Sequence[CorpusSample],
    knowledge: KnowledgeConfig,
    demo_lists: Sequence[Sequence[tuple[str, str]]],
) -> dict[str, str]:
    """Fixture table mapping each eval prompt to its reference annotation."""
    fixtures: dict[str, str] = {}
    for demos in demo_lists:
        for sample in eval_samples:
            prompt = build_psp_prompt(sample.text, knowledge, demos)
            fixtures[prompt.digest()] = sample.markup
    return fixtures


def echo_fixtures_context(
    samples: Sequence[CorpusSample], contexts: Mapping[str, str]
) -> dict[str, str]:
    """Fixture table answering context prompts in the documented A: "..." shape."""
    fixtures: dict[str, str] = {}
    for sample in samples:
        if sample.id in contexts:
            prompt = build_context_prompt(sample.text)
            fixtures[prompt.digest()] = f'A: "{contexts[sample.id]}"'
    return fixtures


def echo_fixtures_joint(samples: Sequence[CorpusSample]) -> dict[str, str]:
    """Fixture table returning the feature continuation after the response prefix."""
    fixtures: dict[str, str] = {}
    for sample in samples:
        if sample.context_utterance is None or sample.response_features is None:
            continue
        target = JointTarget(sample.text, sample.response_features)
        prompt = Prompt.single_user(sample.context_utterance)
        fixtures[prompt.digest()] = target.encoded[len(sample.text) :]
    return fixtures
