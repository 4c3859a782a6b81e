"""Language-model losses and the reconstruction-guided refinement step.

The refinement objective is alpha * L_LM + lambda * L_rec, where L_rec
soft-decodes the model's motion-token distributions (Gumbel-Softmax over
the motion logit slice, masked to the slot's modality block) through the
frozen tokenizer decoders and penalizes squared error against the ground
truth motion, averaged over frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..codec import TokenStream, Vocabulary
from ..errors import CodecError, StageConfigError, ValidationError, VocabularyError
from ..tokenizer.model import MotionTokenizer
from .gumbel import gumbel_softmax, sample_gumbel_noise
from .model import Seq2SeqLM
from .templates import TaskExample

_NEG = -1e9
_SLOT_IS_TRAJ = (True, False, True, False)


def sequence_nll(logits: torch.Tensor, target: torch.Tensor, pad_id: int) -> torch.Tensor:
    """Mean negative log-likelihood over non-<pad> target positions."""
    if target.numel() == 0 or bool((target != pad_id).sum() == 0):
        raise ValidationError("target has no supervised positions")
    return F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), target.reshape(-1), ignore_index=pad_id
    )


def collate_ids(rows: list[list[int]], pad_id: int) -> torch.Tensor:
    width = max(len(r) for r in rows)
    out = torch.full((len(rows), width), pad_id, dtype=torch.long)
    for i, row in enumerate(rows):
        out[i, : len(row)] = torch.tensor(row, dtype=torch.long)
    return out


def lm_loss(
    source: TokenStream | list[int],
    target: TokenStream | list[int],
    model: Seq2SeqLM,
    vocab: Vocabulary,
) -> torch.Tensor:
    """Teacher-forced mean NLL for one (source, target) pair."""
    src_ids = list(source.ids if isinstance(source, TokenStream) else source)
    tgt_ids = list(target.ids if isinstance(target, TokenStream) else target)
    if not tgt_ids:
        raise ValidationError("target must be non-empty")
    for i in src_ids + tgt_ids:
        if not 0 <= i < vocab.size:
            raise VocabularyError(f"id {i} outside vocabulary of size {vocab.size}")
    src = collate_ids([src_ids], vocab.pad_id)
    tgt = collate_ids([tgt_ids], vocab.pad_id)
    logits = model(src, tgt)
    return sequence_nll(logits, tgt, vocab.pad_id)


def slice_motion_logits(logits: torch.Tensor, vocab: Vocabulary) -> torch.Tensor:
    """Exactly the motion-token columns, trajectory block then pose block."""
    return logits[..., vocab.traj_offset : vocab.traj_offset + vocab.motion_size]


def modality_mask(slots: torch.Tensor, vocab: Vocabulary) -> torch.Tensor:
    """(L, 2K) additive mask keeping only each slot's modality block."""
    mask = torch.full((slots.shape[0], vocab.motion_size), _NEG)
    traj_slot = torch.tensor([_SLOT_IS_TRAJ[int(s) % 4] for s in slots])
    mask[traj_slot, : vocab.K] = 0.0
    mask[~traj_slot, vocab.K :] = 0.0
    return mask


def soft_decode(
    simplex_rows: torch.Tensor,
    tokenizer: MotionTokenizer,
    vocab: Vocabulary,
    original_n: int | None = None,
    tol: float = 1e-6,
) -> torch.Tensor:
    """Differentiable decode of (4T, 2K) simplex rows into (N, 198) frames.

    Rows follow the interleaving slot pattern; each trajectory slot must
    carry its mass in the trajectory block and pose slots in the pose
    block, otherwise the routing is ambiguous and a codec error is raised.
    """
    if simplex_rows.ndim != 2 or simplex_rows.shape[1] != vocab.motion_size:
        raise CodecError(f"expected rows of width {vocab.motion_size}")
    if tokenizer.config.codebook_size != vocab.K:
        raise CodecError("tokenizer codebook size does not match the vocabulary")
    length = simplex_rows.shape[0]
    if length == 0 or length % 4 != 0:
        raise CodecError(f"row count {length} is not a positive multiple of 4")
    steps = length // 4
    rows = simplex_rows.reshape(steps, 4, vocab.motion_size)

    for slot in range(4):
        wrong = rows[:, slot, vocab.K :] if _SLOT_IS_TRAJ[slot] else rows[:, slot, : vocab.K]
        if wrong.numel() and float(wrong.detach().abs().max()) > tol:
            raise CodecError(f"slot {slot} carries mass on the wrong modality block")

    traj_entries = tokenizer.traj_codebook.entries
    pose_entries = tokenizer.pose_codebook.entries
    traj_latents = torch.stack(
        [rows[:, 0, : vocab.K] @ traj_entries, rows[:, 2, : vocab.K] @ traj_entries]
    )
    pose_latents = torch.stack(
        [rows[:, 1, vocab.K :] @ pose_entries, rows[:, 3, vocab.K :] @ pose_entries]
    )
    frames = tokenizer.decode_latents(traj_latents, pose_latents)
    if original_n is not None:
        frames = frames[:original_n]
    return frames


def motion_positions(target_ids: list[int], vocab: Vocabulary) -> tuple[list[int], list[int]]:
    """(positions, slots) of motion-kind ids within a target sequence."""
    positions, slots = [], []
    run = 0
    for i, token_id in enumerate(target_ids):
        if vocab.kind(token_id) == "motion":
            positions.append(i)
            slots.append(run % 4)
            run += 1
        else:
            run = 0  # a motion span is contiguous; anything else resets it
    return positions, slots


@dataclass(frozen=True)
class RefineWeights:
    alpha: float = 0.5
    lam: float = 0.5
    tau: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.lam < 0:
            raise ValidationError("loss weights must be non-negative")
        if self.tau <= 0:
            raise ValidationError("tau must be positive")


def refine_step(
    batch: list[TaskExample],
    model: Seq2SeqLM,
    tokenizer: MotionTokenizer,
    vocab: Vocabulary,
    weights: RefineWeights,
    generator: torch.Generator | None = None,
    hard: bool = False,
) -> tuple[torch.Tensor, dict]:
    """alpha * L_LM + lambda * L_rec on one homogeneous-task batch.

    Masked-completion batches force alpha to zero. The Gumbel noise is
    drawn from ``generator`` sample by sample in batch order, so a fixed
    generator seed fixes the noise.
    """
    if not batch:
        raise ValidationError("empty batch")
    tasks = {ex.task for ex in batch}
    if len(tasks) != 1:
        raise StageConfigError(f"refine batches must be single-task, got {tasks}")
    task = tasks.pop()
    alpha = 0.0 if task == "masked_completion" else weights.alpha

    src = collate_ids([ex.source for ex in batch], vocab.pad_id)
    tgt = collate_ids([ex.target for ex in batch], vocab.pad_id)
    logits = model(src, tgt)
    lm_term = sequence_nll(logits, tgt, vocab.pad_id)

    rec_term = logits.new_zeros(())
    if weights.lam > 0:
        rec_values = []
        for i, ex in enumerate(batch):
            if ex.motion_rows is None:
                raise StageConfigError(
                    f"example {ex.record_id!r} lacks ground-truth motion for L_rec"
                )
            positions, slots = motion_positions(ex.target, vocab)
            if not positions:
                raise StageConfigError("refine target contains no motion tokens")
            rows = slice_motion_logits(logits[i, positions], vocab)
            rows = rows + modality_mask(torch.tensor(slots), vocab)
            noise = (
                sample_gumbel_noise(rows.shape, generator=generator, dtype=rows.dtype)
                if generator is not None
                else None
            )
            simplex = gumbel_softmax(rows, weights.tau, noise=noise, hard=hard)
            decoded = soft_decode(simplex, tokenizer, vocab, original_n=ex.original_n)
            truth = torch.from_numpy(np.asarray(ex.motion_rows, dtype=np.float32))
            n = min(decoded.shape[0], truth.shape[0])
            rec_values.append(torch.mean(torch.sum((decoded[:n] - truth[:n]) ** 2, dim=1)))
        rec_term = torch.stack(rec_values).mean()

    total = alpha * lm_term + weights.lam * rec_term
    return total, {
        "lm": float(lm_term.detach()),
        "rec": float(rec_term.detach()),
        "alpha": alpha,
        "lam": weights.lam,
        "task": task,
    }
