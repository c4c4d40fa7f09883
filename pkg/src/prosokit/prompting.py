"""Prompt assembly for prosody prediction and dialogue-context generation.

Prompts are ordered chat messages (system/user/assistant).  A prosody
prediction prompt is always, in order: a system task description, an
optional system message carrying the enabled linguistic-knowledge
passages, the demonstrations as alternating user/assistant turns, and a
final user message with the input sentence.  Construction is a pure
function of its inputs, so identical configurations produce byte-identical
prompts (required for caching and reproducible ablations).

Knowledge passages live in plain-text resource files (one per level)
under ``data/knowledge`` and can be replaced without touching code.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from typing import TYPE_CHECKING, Iterable, Literal, Sequence

from .codec import encode_target
from .markup import MarkupError, parse_annotated, render_annotated
from .rng import derive_seed, shuffled

if TYPE_CHECKING:
    from .corpus import CorpusSample

Role = Literal["system", "user", "assistant"]

MAX_DEMOS = 16

PSP_TASK_DESCRIPTION = (
    "You are the text-analysis front end of a Mandarin Chinese text-to-speech "
    "system. Annotate the prosodic structure of the given sentence by inserting "
    "boundary markers into the text: #1 after each prosodic word, #2 after each "
    "prosodic phrase, and #3 after each intonation phrase. Copy every character "
    "of the input unchanged, insert only the markers, and reply with the "
    "annotated sentence and nothing else."
)

PSP_FINETUNE_PREFIX = "Please perform prosodic prediction on the given sentence:"

CONTEXT_INSTRUCTION = (
    "Please generate the most likely sentence spoken by A based on B's response."
)


class TooManyDemos(ValueError):
    """More than the 16 demonstrations a prompt context can hold."""


class InvalidDemo(ValueError):
    """A demonstration output is not valid markup."""


class InsufficientTrainingData(ValueError):
    """Fewer training samples than requested demonstrations."""


class UnknownCuratedId(ValueError):
    """A curated demonstration id is not in the training split."""


class EmptyResponse(ValueError):
    """Context generation needs a non-empty response."""


class MissingContext(ValueError):
    """Joint export needs a context utterance on every sample."""


class MissingFeatures(ValueError):
    """Joint export needs a feature sequence on every sample."""


@dataclass(frozen=True)
class Message:
    role: Role
    text: str


@dataclass(frozen=True)
class Prompt:
    """Non-empty message list ending in a user turn."""

    messages: tuple[Message, ...]

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("prompt must contain at least one message")
        if self.messages[-1].role != "user":
            raise ValueError("final prompt message must have role 'user'")

    def digest(self) -> str:
        """Stable content address over the role:text pairs."""
        h = hashlib.sha256()
        for m in self.messages:
            h.update(m.role.encode())
            h.update(b"\x1f")
            h.update(m.text.encode())
            h.update(b"\x00")
        return h.hexdigest()

    def as_dicts(self) -> list[dict[str, str]]:
        return [{"role": m.role, "content": m.text} for m in self.messages]

    @classmethod
    def single_user(cls, text: str) -> "Prompt":
        return cls((Message("user", text),))


def _load_knowledge(level: str) -> str:
    path = resources.files("prosokit").joinpath(f"data/knowledge/{level}.txt")
    return path.read_text(encoding="utf-8").strip()


@dataclass(frozen=True)
class KnowledgeConfig:
    """Which prosodic-hierarchy knowledge passages a prompt carries."""

    include_pw: bool = True
    include_pph: bool = True
    include_iph: bool = True
    pw_text: str | None = None  # None -> bundled resource text
    pph_text: str | None = None
    iph_text: str | None = None

    @property
    def any_enabled(self) -> bool:
        return self.include_pw or self.include_pph or self.include_iph

    def block_text(self) -> str:
        parts = ["Background on the Chinese prosodic hierarchy:"]
        if self.include_pw:
            parts.append(f"[Prosodic word, #1] {self.pw_text or _load_knowledge('pw')}")
        if self.include_pph:
            parts.append(f"[Prosodic phrase, #2] {self.pph_text or _load_knowledge('pph')}")
        if self.include_iph:
            parts.append(f"[Intonation phrase, #3] {self.iph_text or _load_knowledge('iph')}")
        return "\n".join(parts)

    @classmethod
    def none(cls) -> "KnowledgeConfig":
        return cls(include_pw=False, include_pph=False, include_iph=False)


@dataclass(frozen=True)
class DemoSelection:
    """How demonstrations are drawn from the training split."""

    k: int
    strategy: Literal["random", "curated"] = "random"
    seed: int = 0
    repeat_count: int = 1
    curated_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if self.k > MAX_DEMOS:
            raise TooManyDemos(f"k={self.k} exceeds the maximum of {MAX_DEMOS}")
        if self.repeat_count < 1:
            raise ValueError("repeat_count must be at least 1")
        if self.strategy == "curated" and len(self.curated_ids) != self.k:
            raise ValueError("curated selection requires k == len(curated_ids)")


def build_psp_prompt(
    input_sentence: str,
    knowledge: KnowledgeConfig,
    demos: Sequence[tuple[str, str]],
) -> Prompt:
    """Assemble the prosody-prediction prompt for one input sentence.

    ``demos`` are (plain input, annotated output) pairs; each output must
    parse as valid markup.  Message count is 2 + 2*len(demos), plus one
    when any knowledge level is enabled.
    """
    if len(demos) > MAX_DEMOS:
        raise TooManyDemos(f"{len(demos)} demonstrations exceed the maximum of {MAX_DEMOS}")
    messages = [Message("system", PSP_TASK_DESCRIPTION)]
    if knowledge.any_enabled:
        messages.append(Message("system", knowledge.block_text()))
    for demo_input, demo_output in demos:
        try:
            parse_annotated(demo_output, "strict")
        except MarkupError as exc:
            raise InvalidDemo(f"demonstration output {demo_output!r}: {exc}") from None
        messages.append(Message("user", demo_input))
        messages.append(Message("assistant", demo_output))
    messages.append(Message("user", input_sentence))
    return Prompt(tuple(messages))


def select_demos(
    train_split: Sequence["CorpusSample"], sel: DemoSelection
) -> list[list["CorpusSample"]]:
    """Demonstration draws: `repeat_count` independent lists for random
    selection (reproducible from the seed), or the single curated list."""
    if sel.strategy == "curated":
        by_id = {s.id: s for s in train_split}
        picked = []
        for sample_id in sel.curated_ids:
            if sample_id not in by_id:
                raise UnknownCuratedId(f"id {sample_id!r} not in the training split")
            picked.append(by_id[sample_id])
        return [picked]
    if len(train_split) < sel.k:
        raise InsufficientTrainingData(
            f"need {sel.k} demonstrations but the training split has {len(train_split)}"
        )
    ordered = sorted(train_split, key=lambda s: s.id)
    return [
        shuffled(ordered, derive_seed(sel.seed, draw))[: sel.k]
        for draw in range(sel.repeat_count)
    ]


def demo_pairs(samples: Iterable["CorpusSample"]) -> list[tuple[str, str]]:
    """(plain input, annotated output) pairs for a list of corpus samples."""
    return [(s.annotated.text, render_annotated(s.annotated)) for s in samples]


def build_context_prompt(response_b: str) -> Prompt:
    """Prompt asking for the utterance most likely to have elicited ``response_b``."""
    if not response_b:
        raise EmptyResponse("response text must be non-empty")
    return Prompt(
        (
            Message("system", CONTEXT_INSTRUCTION),
            Message("user", f'A:\nB: "{response_b}"'),
        )
    )


def export_finetune_records(
    split: Sequence["CorpusSample"], task: Literal["psp", "joint"]
) -> list[dict[str, object]]:
    """Fine-tuning records, one dict per sample.

    ``psp`` records pair the prefixed plain sentence with its annotated
    markup; ``joint`` records pair the generated context utterance with
    the encoded response+features target.  Every record carries
    ``loss_on_completion_only`` so external trainers can mask the prompt.
    """
    records: list[dict[str, object]] = []
    for sample in split:
        if task == "psp":
            prompt = PSP_FINETUNE_PREFIX + sample.annotated.text
            completion = render_annotated(sample.annotated)
        else:
            if sample.context_utterance is None:
                raise MissingContext(f"sample {sample.id} has no context utterance")
            if sample.response_features is None:
                raise MissingFeatures(f"sample {sample.id} has no feature sequence")
            prompt = sample.context_utterance
            completion = encode_target(sample.annotated.text, sample.response_features)
        records.append(
            {"prompt": prompt, "completion": completion, "loss_on_completion_only": True}
        )
    return records


def write_jsonl(records: Iterable[dict[str, object]], path) -> int:
    """Write records as UTF-8 JSON lines; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count
