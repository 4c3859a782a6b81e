"""Tokenizer training loop, checkpointing, and the compression-rate study."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from ..motion import flatten
from ..records import SequenceRecord, corpus_fingerprint
from .model import (
    MotionTokenizer,
    TokenizerConfig,
    build_tokenizer,
    pad_to_multiple,
)


@dataclass(frozen=True)
class TokenizerTrainConfig:
    model: TokenizerConfig = field(default_factory=TokenizerConfig)
    epochs: int = 2000
    lr: float = 2e-4
    batch_size: int = 32
    crop: int = 32
    seed: int = 0

    def scaled(self, **kwargs) -> "TokenizerTrainConfig":
        return replace(self, **kwargs)


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)
    aborted: bool = False

    def final(self, key: str) -> float:
        return self.rows[-1][key]

    def to_csv(self, path: str | Path) -> None:
        if not self.rows:
            return
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(self.rows[0]))
            writer.writeheader()
            writer.writerows(self.rows)


def _record_tensors(model: MotionTokenizer, records, crop: int):
    """Pre-normalized per-record (2, N, C) arrays, padded up to the crop size."""
    out = []
    for rec in records:
        n = max(crop, rec.motion.frames)
        traj = np.stack(
            [
                pad_to_multiple(np.asarray(rec.motion.left.trajectory), n),
                pad_to_multiple(np.asarray(rec.motion.right.trajectory), n),
            ]
        )
        pose = np.stack(
            [
                pad_to_multiple(np.asarray(rec.motion.left.pose), n),
                pad_to_multiple(np.asarray(rec.motion.right.pose), n),
            ]
        )
        traj_t, pose_t = model.normalize(
            torch.from_numpy(traj).float(), torch.from_numpy(pose).float()
        )
        out.append((traj_t, pose_t))
    return out


def train_tokenizer(
    records: list[SequenceRecord],
    config: TokenizerTrainConfig | None = None,
) -> tuple[MotionTokenizer, TrainingLog]:
    """Deterministic-per-seed training with per-epoch dead-code reseeding."""
    config = config or TokenizerTrainConfig()
    if not records:
        raise ValueError("training needs a non-empty dataset")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    model = build_tokenizer(config.model, seed=config.seed)
    model.fit_normalization(records)
    data = _record_tensors(model, records, config.crop)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    log = TrainingLog()
    snapshot = {k: v.clone() for k, v in model.state_dict().items()}

    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        model.traj_codebook.reset_usage()
        model.pose_codebook.reset_usage()
        pools = {"traj": None, "pose": None}
        sums = {"loss": 0.0, "rec": 0.0, "codebook": 0.0, "commit": 0.0}
        steps = 0
        nan_hit = False

        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            traj_batch, pose_batch = [], []
            for i in chunk:
                traj_t, pose_t = data[i]
                offset = int(rng.integers(0, traj_t.shape[1] - config.crop + 1))
                traj_batch.append(traj_t[:, offset : offset + config.crop])
                pose_batch.append(pose_t[:, offset : offset + config.crop])
            # left rows first, then right, so hand halves stay contiguous
            traj = torch.cat(
                [torch.stack([b[0] for b in traj_batch]), torch.stack([b[1] for b in traj_batch])]
            )
            pose = torch.cat(
                [torch.stack([b[0] for b in pose_batch]), torch.stack([b[1] for b in pose_batch])]
            )
            parts = model.vq_terms(traj, pose)
            loss = parts["loss"]
            if not torch.isfinite(loss):
                nan_hit = True
                break
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            model.traj_codebook.record_usage(parts["idx_traj"])
            model.pose_codebook.record_usage(parts["idx_pose"])
            pools["traj"] = parts["z_traj"]
            pools["pose"] = parts["z_pose"]
            for key in sums:
                sums[key] += float(parts[key].detach())
            steps += 1

        if nan_hit:
            model.load_state_dict(snapshot)
            log.aborted = True
            break

        reseeded = 0
        for name, codebook in (("traj", model.traj_codebook), ("pose", model.pose_codebook)):
            pool = pools[name]
            if pool is not None:
                reseeded += codebook.reseed_dead(pool.reshape(-1, codebook.dim), rng)
        log.rows.append(
            {
                "epoch": epoch,
                "loss": sums["loss"] / max(1, steps),
                "rec": sums["rec"] / max(1, steps),
                "codebook": sums["codebook"] / max(1, steps),
                "commit": sums["commit"] / max(1, steps),
                "perplexity_traj": model.traj_codebook.perplexity(),
                "perplexity_pose": model.pose_codebook.perplexity(),
                "reseeded": reseeded,
            }
        )
        snapshot = {k: v.clone() for k, v in model.state_dict().items()}

    model.eval()
    return model, log


def reconstruction_mse(model: MotionTokenizer, records) -> float:
    """Mean squared error of encode->decode round trips in original units."""
    errors = []
    with torch.no_grad():
        for rec in records:
            recon = model.decode(model.encode(rec.motion), original_n=rec.motion.frames)
            diff = flatten(recon).astype(np.float64) - flatten(rec.motion).astype(np.float64)
            errors.append(np.mean(diff**2))
    return float(np.mean(errors))


def corpus_variance(records) -> float:
    rows = np.concatenate([flatten(r.motion) for r in records], axis=0).astype(np.float64)
    return float(rows.var(axis=0).mean())


def compression_study(
    records,
    config: TokenizerTrainConfig,
    rates: tuple[int, ...] = (2, 4, 8, 16),
) -> dict[int, float]:
    """Retrain at each temporal compression rate; report round-trip MSE."""
    results = {}
    for rate in rates:
        run = config.scaled(model=replace(config.model, downsample=rate))
        model, _ = train_tokenizer(records, run)
        results[rate] = reconstruction_mse(model, records)
    return results


def save_tokenizer(
    model: MotionTokenizer,
    path: str | Path,
    seed: int | None = None,
    corpus_hash: str | None = None,
) -> None:
    """Self-describing archive: named arrays plus a JSON metadata entry."""
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {
        "kind": "motion-tokenizer",
        "config": asdict(model.config),
        "seed": seed,
        "corpus_hash": corpus_hash,
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_tokenizer(path: str | Path) -> tuple[MotionTokenizer, dict]:
    with np.load(path) as archive:
        meta = json.loads(bytes(archive["__meta__"].tobytes()).decode())
        state = {
            k: torch.from_numpy(archive[k]) for k in archive.files if k != "__meta__"
        }
    model = MotionTokenizer(TokenizerConfig(**meta["config"]))
    model.load_state_dict(state)
    model.eval()
    return model, meta


def fingerprint_state(model: torch.nn.Module) -> str:
    """Hash of all parameters and buffers; used to prove a model was frozen."""
    import hashlib

    h = hashlib.sha256()
    for key, value in sorted(model.state_dict().items()):
        h.update(key.encode())
        h.update(value.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def tokenizer_corpus_hash(records) -> str:
    return corpus_fingerprint(records)
