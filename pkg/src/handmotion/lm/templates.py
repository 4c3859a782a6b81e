"""Instruction templates and task-example rendering.

Templates are data: plain text with a {caption} or {motion} placeholder.
Rendering splices text token ids around the caption ids or the interleaved
motion stream ids. Masked completion replaces whole 4-token motion groups
with <mask> in the source while keeping the full stream as the target.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from importlib import resources

from ..codec import TextTokenizer, TokenStream, Vocabulary
from ..errors import ValidationError

TASKS = ("t2m", "m2t", "masked_completion")


def load_instruction_data() -> dict:
    raw = resources.files("handmotion.data").joinpath("instructions.json").read_text()
    return json.loads(raw)


@dataclass(frozen=True)
class InstructionTemplate:
    task: str
    pattern: str

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValidationError(f"unknown task {self.task!r}")
        placeholder = "{caption}" if self.task == "t2m" else "{motion}"
        if placeholder not in self.pattern:
            raise ValidationError(f"{self.task} template needs {placeholder}")


@dataclass
class TemplateLibrary:
    pretrain: dict[str, InstructionTemplate]
    instruct: dict[str, list[InstructionTemplate]]

    @classmethod
    def default(cls) -> "TemplateLibrary":
        data = load_instruction_data()
        return cls(
            pretrain={
                task: InstructionTemplate(task, pattern)
                for task, pattern in data["pretrain"].items()
            },
            instruct={
                task: [InstructionTemplate(task, p) for p in patterns]
                for task, patterns in data["instruct"].items()
            },
        )

    def all_text(self) -> list[str]:
        texts = [t.pattern for t in self.pretrain.values()]
        for templates in self.instruct.values():
            texts.extend(t.pattern for t in templates)
        return texts


def build_vocabulary(records, codebook_size: int) -> Vocabulary:
    """Unified vocabulary over corpus captions plus the instruction text."""
    texts = []
    for rec in records:
        texts.append(rec.caption_high)
        texts.append(rec.caption_fine)
    texts.extend(TemplateLibrary.default().all_text())
    return Vocabulary(TextTokenizer.from_corpus(texts), codebook_size)


@dataclass
class TaskExample:
    task: str
    source: list[int]
    target: list[int]
    record_id: str = ""
    motion_rows: np.ndarray | None = None  # (N, 198) ground truth for L_rec
    original_n: int | None = None


def _render_pattern(
    pattern: str, vocab: Vocabulary, caption: str | None, stream: TokenStream | None
) -> list[int]:
    ids: list[int] = []
    pos = 0
    for match in re.finditer(r"\{(caption|motion)\}", pattern):
        ids.extend(vocab.text.encode(pattern[pos : match.start()]))
        if match.group(1) == "caption":
            if caption is None:
                raise ValidationError("template needs a caption")
            ids.extend(vocab.text.encode(caption))
        else:
            if stream is None:
                raise ValidationError("template needs a motion stream")
            ids.extend(stream.ids)
        pos = match.end()
    ids.extend(vocab.text.encode(pattern[pos:]))
    return ids


def render_t2m(
    caption: str,
    stream: TokenStream,
    vocab: Vocabulary,
    template: InstructionTemplate,
    record_id: str = "",
    motion_rows: np.ndarray | None = None,
    original_n: int | None = None,
) -> TaskExample:
    return TaskExample(
        task="t2m",
        source=_render_pattern(template.pattern, vocab, caption, None),
        target=list(stream.ids),
        record_id=record_id,
        motion_rows=motion_rows,
        original_n=original_n,
    )


def render_m2t(
    caption: str,
    stream: TokenStream,
    vocab: Vocabulary,
    template: InstructionTemplate,
    record_id: str = "",
) -> TaskExample:
    return TaskExample(
        task="m2t",
        source=_render_pattern(template.pattern, vocab, None, stream),
        target=vocab.text.encode(caption, add_eos=True),
        record_id=record_id,
    )


def mask_stream(
    stream: TokenStream, vocab: Vocabulary, mask_ratio: float, rng: np.random.Generator
) -> TokenStream:
    """Replace a contiguous run of whole 4-token groups with <mask>."""
    ids = list(stream.ids)
    groups = (len(ids) - 2) // 4
    n_mask = int(round(mask_ratio * groups))
    if groups == 0 or n_mask == 0:
        return stream
    start_group = int(rng.integers(0, groups - n_mask + 1))
    lo = 1 + 4 * start_group
    hi = lo + 4 * n_mask
    for i in range(lo, hi):
        ids[i] = vocab.mask_id
    return TokenStream(ids=tuple(ids))


def render_masked(
    stream: TokenStream,
    vocab: Vocabulary,
    template: InstructionTemplate,
    mask_ratio: float,
    rng: np.random.Generator,
    record_id: str = "",
    motion_rows: np.ndarray | None = None,
    original_n: int | None = None,
) -> TaskExample:
    masked = mask_stream(stream, vocab, mask_ratio, rng)
    return TaskExample(
        task="masked_completion",
        source=_render_pattern(template.pattern, vocab, None, masked),
        target=list(stream.ids),
        record_id=record_id,
        motion_rows=motion_rows,
        original_n=original_n,
    )
