"""Autoregressive decoding: greedy or temperature/top-k sampling.

Text-to-motion decoding constrains the sampled ids to the interleaving
grammar (slot-appropriate modality blocks, <eom> only at group boundaries
after at least one full group), and the result still passes through
``repair`` before decoding, so generation always yields a decodable span.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..codec import TokenStream, Vocabulary, deinterleave, repair
from ..errors import ValidationError
from ..motion import MotionSequence
from ..tokenizer.model import MotionTokenizer
from .losses import collate_ids
from .model import Seq2SeqLM
from .templates import InstructionTemplate, TemplateLibrary, render_m2t, render_t2m


@dataclass(frozen=True)
class SamplingConfig:
    greedy: bool = True
    temperature: float = 1.0
    top_k: int = 0
    max_len: int = 96
    seed: int = 0

    def __post_init__(self):
        if not self.greedy and self.temperature < 0:
            raise ValidationError("temperature must be non-negative")


def _grammar_mask(vocab: Vocabulary, produced: int, started: bool) -> torch.Tensor:
    """Allowed next ids for constrained motion decoding."""
    mask = torch.full((vocab.size,), float("-inf"))
    if not started:
        mask[vocab.som_id] = 0.0
        return mask
    slot = produced % 4
    if slot in (0, 2):
        mask[vocab.traj_offset : vocab.traj_offset + vocab.K] = 0.0
    else:
        mask[vocab.pose_offset : vocab.pose_offset + vocab.K] = 0.0
    if slot == 0 and produced >= 4:
        mask[vocab.eom_id] = 0.0
    return mask


def _pick(
    logits: torch.Tensor, sampling: SamplingConfig, generator: torch.Generator | None
) -> int:
    if sampling.greedy or sampling.temperature == 0.0:
        return int(logits.argmax())
    scaled = logits / max(sampling.temperature, 1e-8)
    if sampling.top_k > 0:
        k = min(sampling.top_k, scaled.shape[-1])
        cutoff = torch.topk(scaled, k).values[-1]
        scaled = scaled.masked_fill(scaled < cutoff, float("-inf"))
    probs = torch.softmax(scaled, dim=-1)
    return int(torch.multinomial(probs, 1, generator=generator))


def generate(
    source: TokenStream | list[int],
    model: Seq2SeqLM,
    vocab: Vocabulary,
    sampling: SamplingConfig | None = None,
    motion_grammar: bool = False,
) -> TokenStream:
    """Decode one target sequence until <eos>/<eom> or the length limit."""
    sampling = sampling or SamplingConfig()
    model.eval()
    src_ids = list(source.ids if isinstance(source, TokenStream) else source)
    generator = torch.Generator().manual_seed(sampling.seed)
    stop_ids = {vocab.text.eos_id, vocab.eom_id}

    with torch.no_grad():
        src = collate_ids([src_ids], vocab.pad_id)
        memory, src_pad = model.encode_source(src)
        out: list[int] = []
        produced, started = 0, False
        for _ in range(sampling.max_len):
            tgt_in = collate_ids([[vocab.pad_id] + out], vocab.pad_id)
            logits = model.decode_logits(tgt_in, memory, src_pad)[0, -1]
            if motion_grammar:
                logits = logits + _grammar_mask(vocab, produced, started)
            token = _pick(logits, sampling, generator)
            out.append(token)
            if motion_grammar:
                if token == vocab.som_id:
                    started = True
                elif vocab.kind(token) == "motion":
                    produced += 1
            if token in stop_ids:
                break
    return TokenStream(ids=tuple(out))


def generate_batch(
    sources: list[list[int]],
    model: Seq2SeqLM,
    vocab: Vocabulary,
    sampling: SamplingConfig | None = None,
    motion_grammar: bool = False,
) -> list[TokenStream]:
    """Batched decoding; per-sequence results match one-at-a-time greedy."""
    sampling = sampling or SamplingConfig()
    model.eval()
    generator = torch.Generator().manual_seed(sampling.seed)
    stop_ids = (vocab.text.eos_id, vocab.eom_id)
    n = len(sources)

    with torch.no_grad():
        src = collate_ids(sources, vocab.pad_id)
        memory, src_pad = model.encode_source(src)
        rows: list[list[int]] = [[] for _ in range(n)]
        finished = [False] * n
        produced = [0] * n
        started = [False] * n
        for _ in range(sampling.max_len):
            tgt_in = collate_ids([[vocab.pad_id] + row for row in rows], vocab.pad_id)
            logits = model.decode_logits(tgt_in, memory, src_pad)[:, -1]
            for i in range(n):
                if finished[i]:
                    rows[i].append(vocab.pad_id)
                    continue
                step_logits = logits[i]
                if motion_grammar:
                    step_logits = step_logits + _grammar_mask(vocab, produced[i], started[i])
                token = _pick(step_logits, sampling, generator)
                rows[i].append(token)
                if motion_grammar:
                    if token == vocab.som_id:
                        started[i] = True
                    elif vocab.kind(token) == "motion":
                        produced[i] += 1
                if token in stop_ids:
                    finished[i] = True
            if all(finished):
                break
    cleaned = []
    for row in rows:
        ids = [t for t in row if t != vocab.pad_id]
        cleaned.append(TokenStream(ids=tuple(ids)))
    return cleaned


def stream_to_text(stream: TokenStream, vocab: Vocabulary) -> str:
    """Keep text-kind ids up to <eos> and detokenize."""
    ids = []
    for token_id in stream:
        if token_id == vocab.text.eos_id:
            break
        if vocab.kind(token_id) == "text":
            ids.append(token_id)
    return vocab.text.decode(ids)


def text_to_motion(
    text: str,
    model: Seq2SeqLM,
    tokenizer: MotionTokenizer,
    vocab: Vocabulary,
    sampling: SamplingConfig | None = None,
    template: InstructionTemplate | None = None,
) -> tuple[MotionSequence, TokenStream]:
    template = template or TemplateLibrary.default().instruct["t2m"][0]
    example = render_t2m(text, TokenStream(ids=()), vocab, template)
    raw = generate(example.source, model, vocab, sampling, motion_grammar=True)
    fixed = repair(raw, vocab)
    tokens = deinterleave(fixed, vocab)
    motion = tokenizer.decode(tokens, original_n=tokens.steps * tokenizer.downsample)
    return motion, fixed


def caption_stream(
    stream: TokenStream,
    model: Seq2SeqLM,
    vocab: Vocabulary,
    sampling: SamplingConfig | None = None,
    template: InstructionTemplate | None = None,
) -> str:
    template = template or TemplateLibrary.default().instruct["m2t"][0]
    example = render_m2t("", stream, vocab, template)
    out = generate(example.source, model, vocab, sampling)
    return stream_to_text(out, vocab)


def caption_motion(
    motion: MotionSequence,
    model: Seq2SeqLM,
    tokenizer: MotionTokenizer,
    vocab: Vocabulary,
    sampling: SamplingConfig | None = None,
    template: InstructionTemplate | None = None,
) -> str:
    from ..codec import interleave

    stream = interleave(tokenizer.encode(motion), vocab)
    return caption_stream(stream, model, vocab, sampling, template)
