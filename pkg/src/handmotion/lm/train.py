"""Three-stage training: pretraining, reconstruction-guided refinement,
and instruction fine-tuning. The motion tokenizer stays frozen throughout;
that is asserted by hashing its state before and after every stage."""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..codec import TokenStream, Vocabulary, interleave
from ..errors import StageConfigError, ValidationError, VocabularyError
from ..motion import flatten
from ..records import SequenceRecord
from ..tokenizer.model import MotionTokenizer
from ..tokenizer.train import fingerprint_state
from .losses import (
    RefineWeights,
    collate_ids,
    modality_mask,
    motion_positions,
    refine_step,
    sequence_nll,
    slice_motion_logits,
    soft_decode,
)
from .model import LMConfig, Seq2SeqLM, build_lm
from .templates import TemplateLibrary, TaskExample, render_m2t, render_masked, render_t2m

STAGES = ("pretrain", "refine", "instruct")


@dataclass(frozen=True)
class StageConfig:
    stage: str
    epochs: int
    lr: float
    alpha: float = 0.5
    lam: float = 0.5
    tau_start: float = 2.0
    tau_end: float = 0.5
    mask_ratio: float = 0.3
    batch_size: int = 16
    seed: int = 0
    val_fraction: float = 0.1
    # refine-stage mixing: GR batches split 70/30 between t2m and masked
    # completion; a further m2t share is trained with plain cross-entropy
    gr_t2m_fraction: float = 0.7
    m2t_fraction: float = 0.3

    def __post_init__(self):
        if self.stage not in STAGES:
            raise StageConfigError(f"unknown stage {self.stage!r}")
        if self.alpha < 0 or self.lam < 0:
            raise StageConfigError("alpha and lambda must be non-negative")
        if self.tau_start <= 0 or self.tau_end <= 0:
            raise StageConfigError("tau schedule must stay positive")
        if not 0 <= self.mask_ratio <= 1:
            raise StageConfigError("mask_ratio must lie in [0, 1]")


def default_stage_configs(seed: int = 0) -> dict[str, StageConfig]:
    """Desk-scale presets, scaled down from 300/50/200 epoch full runs."""
    return {
        "pretrain": StageConfig(stage="pretrain", epochs=42, lr=1e-3, seed=seed),
        "refine": StageConfig(stage="refine", epochs=10, lr=1e-4, seed=seed),
        "instruct": StageConfig(stage="instruct", epochs=24, lr=3e-4, seed=seed),
    }


@dataclass
class StageLog:
    stage: str
    rows: list[dict] = field(default_factory=list)
    aborted: bool = False

    def to_csv(self, path: str | Path) -> None:
        if not self.rows:
            return
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(self.rows[0]))
            writer.writeheader()
            writer.writerows(self.rows)


def encode_corpus(
    records: list[SequenceRecord], tokenizer: MotionTokenizer, vocab: Vocabulary
) -> dict[str, TokenStream]:
    tokenizer.eval()
    return {
        rec.id: interleave(tokenizer.encode(rec.motion), vocab) for rec in records
    }


def split_records(records, val_fraction: float, seed: int):
    order = np.random.default_rng(seed).permutation(len(records))
    n_val = max(1, int(round(val_fraction * len(records)))) if len(records) > 1 else 0
    val_idx = set(order[:n_val].tolist())
    train = [records[i] for i in range(len(records)) if i not in val_idx]
    val = [records[i] for i in sorted(val_idx)]
    return train, val


def _tau_schedule(config: StageConfig) -> list[float]:
    if config.epochs <= 1:
        return [config.tau_end] * max(config.epochs, 1)
    ratio = config.tau_end / config.tau_start
    return [
        config.tau_start * ratio ** (e / (config.epochs - 1)) for e in range(config.epochs)
    ]


def _pretrain_examples(records, streams, vocab, library) -> list[TaskExample]:
    out = []
    for rec in records:
        stream = streams[rec.id]
        out.append(render_t2m(rec.caption_high, stream, vocab, library.pretrain["t2m"], rec.id))
        out.append(render_m2t(rec.caption_fine, stream, vocab, library.pretrain["m2t"], rec.id))
    return out


def _instruct_examples(records, streams, vocab, library, rng) -> list[TaskExample]:
    out = []
    for rec in records:
        stream = streams[rec.id]
        caption = rec.caption_fine if rng.random() < 0.5 else rec.caption_high
        t2m_t = library.instruct["t2m"][rng.integers(0, len(library.instruct["t2m"]))]
        m2t_t = library.instruct["m2t"][rng.integers(0, len(library.instruct["m2t"]))]
        mc_t = library.instruct["masked_completion"][
            rng.integers(0, len(library.instruct["masked_completion"]))
        ]
        out.append(render_t2m(caption, stream, vocab, t2m_t, rec.id))
        out.append(render_m2t(rec.caption_fine, stream, vocab, m2t_t, rec.id))
        out.append(render_masked(stream, vocab, mc_t, mask_ratio=0.3, rng=rng, record_id=rec.id))
    return out


def _refine_examples(records, streams, vocab, library, config, rng) -> list[TaskExample]:
    out = []
    for rec in records:
        stream = streams[rec.id]
        rows = flatten(rec.motion)
        draw = rng.random()
        if draw < config.m2t_fraction:
            out.append(render_m2t(rec.caption_fine, stream, vocab, library.pretrain["m2t"], rec.id))
        elif rng.random() < config.gr_t2m_fraction:
            out.append(
                render_t2m(
                    rec.caption_high,
                    stream,
                    vocab,
                    library.pretrain["t2m"],
                    rec.id,
                    motion_rows=rows,
                    original_n=rec.motion.frames,
                )
            )
        else:
            out.append(
                render_masked(
                    stream,
                    vocab,
                    library.instruct["masked_completion"][0],
                    mask_ratio=config.mask_ratio,
                    rng=rng,
                    record_id=rec.id,
                    motion_rows=rows,
                    original_n=rec.motion.frames,
                )
            )
    return out


def _batches(examples: list[TaskExample], batch_size: int, rng, by_task: bool):
    """Shuffled batches; optionally homogeneous per task (refine stage)."""
    if by_task:
        groups: dict[str, list[TaskExample]] = {}
        for ex in examples:
            groups.setdefault(ex.task, []).append(ex)
        batches = []
        for task in sorted(groups):
            items = groups[task]
            order = rng.permutation(len(items))
            for start in range(0, len(items), batch_size):
                batches.append([items[i] for i in order[start : start + batch_size]])
        batch_order = rng.permutation(len(batches))
        return [batches[i] for i in batch_order]
    order = rng.permutation(len(examples))
    return [
        [examples[i] for i in order[start : start + batch_size]]
        for start in range(0, len(examples), batch_size)
    ]


def validation_ce(model, records, streams, vocab, library) -> float:
    """Cross-entropy on simple t2m+m2t renderings; comparable across stages."""
    examples = _pretrain_examples(records, streams, vocab, library)
    model.eval()
    losses = []
    with torch.no_grad():
        for start in range(0, len(examples), 16):
            batch = examples[start : start + 16]
            src = collate_ids([ex.source for ex in batch], vocab.pad_id)
            tgt = collate_ids([ex.target for ex in batch], vocab.pad_id)
            logits = model(src, tgt)
            losses.append(float(sequence_nll(logits, tgt, vocab.pad_id)))
    return float(np.mean(losses))


def soft_reconstruction_mse(
    model: Seq2SeqLM,
    tokenizer: MotionTokenizer,
    vocab: Vocabulary,
    records: list[SequenceRecord],
    streams: dict[str, TokenStream] | None = None,
    tau: float = 0.5,
) -> float:
    """Teacher-forced, zero-noise soft-decoded motion error (original units).

    This is the quantity the refinement stage optimizes, evaluated
    deterministically, so it cleanly compares checkpoints.
    """
    library = TemplateLibrary.default()
    streams = streams or encode_corpus(records, tokenizer, vocab)
    model.eval()
    errors = []
    with torch.no_grad():
        for rec in records:
            stream = streams[rec.id]
            ex = render_t2m(rec.caption_high, stream, vocab, library.pretrain["t2m"], rec.id)
            src = collate_ids([ex.source], vocab.pad_id)
            tgt = collate_ids([ex.target], vocab.pad_id)
            logits = model(src, tgt)[0]
            positions, slots = motion_positions(ex.target, vocab)
            rows = slice_motion_logits(logits[positions], vocab)
            rows = rows + modality_mask(torch.tensor(slots), vocab)
            simplex = torch.softmax(rows / tau, dim=-1)
            decoded = soft_decode(simplex, tokenizer, vocab, original_n=rec.motion.frames)
            truth = torch.from_numpy(flatten(rec.motion))
            errors.append(float(torch.mean((decoded - truth) ** 2)))
    return float(np.mean(errors))


def train_lm(
    records: list[SequenceRecord],
    stage_config: StageConfig,
    model: Seq2SeqLM,
    tokenizer: MotionTokenizer,
    vocab: Vocabulary,
    checkpoint_dir: str | Path | None = None,
) -> tuple[Seq2SeqLM, StageLog]:
    """Run one training stage in place and return the model plus its log."""
    if not records:
        raise ValidationError("training needs a non-empty dataset")
    frozen_before = fingerprint_state(tokenizer)
    tokenizer.eval()
    for p in tokenizer.parameters():
        p.requires_grad_(False)

    library = TemplateLibrary.default()
    streams = encode_corpus(records, tokenizer, vocab)
    train, val = split_records(records, stage_config.val_fraction, stage_config.seed)
    torch.manual_seed(stage_config.seed * 7 + STAGES.index(stage_config.stage))
    optimizer = torch.optim.Adam(model.parameters(), lr=stage_config.lr)
    log = StageLog(stage=stage_config.stage)
    taus = _tau_schedule(stage_config)
    snapshot = copy.deepcopy(model.state_dict())

    for epoch in range(stage_config.epochs):
        rng = np.random.default_rng((stage_config.seed, epoch))
        gumbel_gen = torch.Generator().manual_seed(stage_config.seed * 100_003 + epoch)
        model.train()

        if stage_config.stage == "pretrain":
            examples = _pretrain_examples(train, streams, vocab, library)
            batches = _batches(examples, stage_config.batch_size, rng, by_task=False)
        elif stage_config.stage == "instruct":
            examples = _instruct_examples(train, streams, vocab, library, rng)
            batches = _batches(examples, stage_config.batch_size, rng, by_task=False)
        else:
            examples = _refine_examples(train, streams, vocab, library, stage_config, rng)
            batches = _batches(examples, stage_config.batch_size, rng, by_task=True)

        sums = {"loss": 0.0, "lm": 0.0, "rec": 0.0}
        steps = 0
        nan_hit = False
        for batch in batches:
            if stage_config.stage == "refine" and batch[0].motion_rows is not None:
                weights = RefineWeights(
                    alpha=stage_config.alpha, lam=stage_config.lam, tau=taus[epoch]
                )
                loss, parts = refine_step(
                    batch, model, tokenizer, vocab, weights, generator=gumbel_gen
                )
                sums["lm"] += parts["lm"]
                sums["rec"] += parts["rec"]
            else:
                src = collate_ids([ex.source for ex in batch], vocab.pad_id)
                tgt = collate_ids([ex.target for ex in batch], vocab.pad_id)
                loss = sequence_nll(model(src, tgt), tgt, vocab.pad_id)
                sums["lm"] += float(loss.detach())
            if not torch.isfinite(loss):
                nan_hit = True
                break
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            sums["loss"] += float(loss.detach())
            steps += 1

        if nan_hit:
            model.load_state_dict(snapshot)
            log.aborted = True
            break

        val_ce = validation_ce(model, val or train, streams, vocab, library)
        log.rows.append(
            {
                "stage": stage_config.stage,
                "epoch": epoch,
                "loss": sums["loss"] / max(1, steps),
                "lm": sums["lm"] / max(1, steps),
                "rec": sums["rec"] / max(1, steps),
                "val_ce": val_ce,
                "tau": taus[epoch],
            }
        )
        snapshot = copy.deepcopy(model.state_dict())

    model.eval()
    if fingerprint_state(tokenizer) != frozen_before:
        raise StageConfigError("tokenizer parameters changed during an LM stage")
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        save_lm(
            model,
            checkpoint_dir / f"lm_{stage_config.stage}.npz",
            vocab,
            stage_config=stage_config,
        )
        log.to_csv(checkpoint_dir / f"lm_{stage_config.stage}_log.csv")
    return model, log


def train_three_stages(
    records: list[SequenceRecord],
    tokenizer: MotionTokenizer,
    seed: int = 0,
    configs: dict[str, StageConfig] | None = None,
    lm_config: LMConfig | None = None,
    checkpoint_dir: str | Path | None = None,
) -> dict:
    """Full recipe; returns per-stage snapshots, logs, vocab, and the split."""
    configs = configs or default_stage_configs(seed)
    from .templates import build_vocabulary

    vocab = build_vocabulary(records, tokenizer.config.codebook_size)
    model = build_lm(lm_config or LMConfig.tiny(vocab.size), vocab.pad_id, seed=seed)

    bundle = {"vocab": vocab, "logs": {}, "models": {}, "seed": seed}
    for stage in STAGES:
        model, log = train_lm(
            records, configs[stage], model, tokenizer, vocab, checkpoint_dir
        )
        bundle["logs"][stage] = log
        bundle["models"][stage] = copy.deepcopy(model)
    bundle["final"] = model
    return bundle


def save_lm(
    model: Seq2SeqLM,
    path: str | Path,
    vocab: Vocabulary,
    stage_config: StageConfig | None = None,
    seed: int | None = None,
) -> None:
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {
        "kind": "seq2seq-lm",
        "config": asdict(model.config),
        "pad_id": model.pad_id,
        "vocab_fingerprint": vocab.fingerprint(),
        "vocab_words": vocab.text.words,
        "codebook_size": vocab.K,
        "stage_config": asdict(stage_config) if stage_config else None,
        "seed": seed,
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_lm(path: str | Path, vocab: Vocabulary | None = None) -> tuple[Seq2SeqLM, dict]:
    with np.load(path) as archive:
        meta = json.loads(bytes(archive["__meta__"].tobytes()).decode())
        state = {k: torch.from_numpy(archive[k]) for k in archive.files if k != "__meta__"}
    if vocab is not None and meta["vocab_fingerprint"] != vocab.fingerprint():
        raise VocabularyError("checkpoint was built against a different vocabulary")
    model = Seq2SeqLM(LMConfig(**meta["config"]), pad_id=meta["pad_id"])
    model.load_state_dict(state)
    model.eval()
    return model, meta


def load_lm_with_vocab(path: str | Path) -> tuple[Seq2SeqLM, Vocabulary, dict]:
    """Self-contained load: the checkpoint carries its own vocabulary."""
    from ..codec import TextTokenizer

    model, meta = load_lm(path)
    words = meta.get("vocab_words")
    if words is None:
        raise VocabularyError("checkpoint lacks an embedded vocabulary")
    # TextTokenizer prepends <unk>/<eos>; strip them to rebuild identically
    vocab = Vocabulary(TextTokenizer(words[2:]), meta["codebook_size"])
    if vocab.fingerprint() != meta["vocab_fingerprint"]:
        raise VocabularyError("embedded vocabulary does not match its fingerprint")
    return model, vocab, meta
