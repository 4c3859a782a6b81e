"""Contrastive text-motion evaluator and the nearest-centroid family classifier.

Retrieval-style metrics need a pinned feature extractor: a temporal-conv
motion encoder and a hashed bag-of-n-gram text encoder trained with a
symmetric InfoNCE objective on matched (motion, caption) pairs. Embeddings
are L2-normalized. The evaluator's parameter hash is recorded in reports.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from ..errors import ValidationError
from ..motion import MotionSequence, flatten
from ..records import SequenceRecord

TEXT_FEATURES = 512
EMBED_DIM = 128
MOTION_CROP = 48


def text_features(caption: str, dim: int = TEXT_FEATURES) -> np.ndarray:
    """Hashed word unigrams+bigrams and char trigrams, L2 normalized."""
    words = caption.lower().split()
    grams = list(words)
    grams += [f"{a}_{b}" for a, b in zip(words, words[1:])]
    text = f" {' '.join(words)} "
    grams += [text[i : i + 3] for i in range(len(text) - 2)]
    vec = np.zeros(dim, dtype=np.float32)
    for g in grams:
        vec[zlib.crc32(g.encode()) % dim] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def motion_crop(motion: MotionSequence, crop: int = MOTION_CROP) -> np.ndarray:
    rows = flatten(motion)
    if rows.shape[0] >= crop:
        return rows[:crop]
    pad = np.repeat(rows[-1:], crop - rows.shape[0], axis=0)
    return np.concatenate([rows, pad], axis=0)


class ContrastiveEvaluator(nn.Module):
    """Motion conv encoder + text linear encoder into one embedding space."""

    def __init__(self, dim: int = EMBED_DIM, width: int = 96):
        super().__init__()
        self.dim = dim
        self.motion_net = nn.Sequential(
            nn.Conv1d(198, width, 3, padding=1),
            nn.GELU(),
            nn.Conv1d(width, width, 4, stride=2, padding=1),
            nn.GELU(),
            nn.Conv1d(width, width, 4, stride=2, padding=1),
            nn.GELU(),
        )
        self.motion_head = nn.Linear(width, dim)
        self.text_net = nn.Sequential(
            nn.Linear(TEXT_FEATURES, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim)
        )
        self.register_buffer("feat_mean", torch.zeros(198))
        self.register_buffer("feat_std", torch.ones(198))
        self.logit_scale = nn.Parameter(torch.tensor(float(np.log(1 / 0.07))))

    @torch.no_grad()
    def fit_normalization(self, records: list[SequenceRecord]) -> None:
        rows = np.concatenate([flatten(r.motion) for r in records], axis=0)
        self.feat_mean.copy_(torch.from_numpy(rows.mean(axis=0)).float())
        self.feat_std.copy_(torch.from_numpy(rows.std(axis=0)).float().clamp_min(1e-4))

    def encode_motion_batch(self, crops: torch.Tensor) -> torch.Tensor:
        x = (crops - self.feat_mean) / self.feat_std
        h = self.motion_net(x.transpose(1, 2)).mean(dim=2)
        z = self.motion_head(h)
        return nn.functional.normalize(z, dim=-1)

    def encode_text_batch(self, feats: torch.Tensor) -> torch.Tensor:
        return nn.functional.normalize(self.text_net(feats), dim=-1)


@dataclass
class TrainedEvaluator:
    module: ContrastiveEvaluator
    family_centroids: dict[str, np.ndarray] = field(default_factory=dict)

    def embed_motions(self, motions: list[MotionSequence]) -> np.ndarray:
        crops = torch.from_numpy(np.stack([motion_crop(m) for m in motions])).float()
        with torch.no_grad():
            return self.module.encode_motion_batch(crops).numpy()

    def embed_texts(self, captions: list[str]) -> np.ndarray:
        feats = torch.from_numpy(np.stack([text_features(c) for c in captions]))
        with torch.no_grad():
            return self.module.encode_text_batch(feats).numpy()

    def classify_family(self, motion: MotionSequence) -> str:
        if not self.family_centroids:
            raise ValidationError("evaluator has no family centroids")
        z = self.embed_motions([motion])[0]
        names = sorted(self.family_centroids)
        sims = [float(z @ self.family_centroids[name]) for name in names]
        return names[int(np.argmax(sims))]

    def fingerprint(self) -> str:
        from ..tokenizer.train import fingerprint_state

        return fingerprint_state(self.module)


def save_evaluator(evaluator: TrainedEvaluator, path, seed: int | None = None) -> None:
    """Archive the module weights plus the family centroids."""
    import json

    arrays = {
        f"module.{k}": v.detach().cpu().numpy()
        for k, v in evaluator.module.state_dict().items()
    }
    for name, centroid in evaluator.family_centroids.items():
        arrays[f"centroid.{name}"] = centroid
    meta = {"kind": "contrastive-evaluator", "dim": evaluator.module.dim, "seed": seed}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_evaluator(path) -> TrainedEvaluator:
    import json

    with np.load(path) as archive:
        meta = json.loads(bytes(archive["__meta__"].tobytes()).decode())
        module = ContrastiveEvaluator(dim=meta["dim"])
        state = {
            k[len("module.") :]: torch.from_numpy(archive[k])
            for k in archive.files
            if k.startswith("module.")
        }
        module.load_state_dict(state)
        module.eval()
        centroids = {
            k[len("centroid.") :]: archive[k]
            for k in archive.files
            if k.startswith("centroid.")
        }
    return TrainedEvaluator(module=module, family_centroids=centroids)


@dataclass(frozen=True)
class EvaluatorTrainConfig:
    epochs: int = 60
    lr: float = 1e-3
    batch_size: int = 48
    seed: int = 0
    dim: int = EMBED_DIM


def train_evaluator(
    records: list[SequenceRecord], config: EvaluatorTrainConfig | None = None
) -> TrainedEvaluator:
    """Symmetric InfoNCE on matched (motion, fine caption) pairs."""
    config = config or EvaluatorTrainConfig()
    captions = [r.caption_fine for r in records]
    if len(set(captions)) < 2:
        raise ValidationError("need at least 2 distinct captions to contrast")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    module = ContrastiveEvaluator(dim=config.dim)
    module.fit_normalization(records)
    crops = torch.from_numpy(np.stack([motion_crop(r.motion) for r in records])).float()
    feats = torch.from_numpy(np.stack([text_features(c) for c in captions]))
    optimizer = torch.optim.Adam(module.parameters(), lr=config.lr)

    module.train()
    for _ in range(config.epochs):
        order = rng.permutation(len(records))
        for start in range(0, len(order), config.batch_size):
            idx = torch.from_numpy(order[start : start + config.batch_size].copy())
            if idx.numel() < 2:
                continue
            zm = module.encode_motion_batch(crops[idx])
            zt = module.encode_text_batch(feats[idx])
            scale = module.logit_scale.exp().clamp(max=100.0)
            logits = scale * zm @ zt.T
            labels = torch.arange(idx.numel())
            loss = 0.5 * (
                nn.functional.cross_entropy(logits, labels)
                + nn.functional.cross_entropy(logits.T, labels)
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    module.eval()

    evaluator = TrainedEvaluator(module=module)
    by_family: dict[str, list[np.ndarray]] = {}
    embeddings = evaluator.embed_motions([r.motion for r in records])
    for rec, z in zip(records, embeddings):
        by_family.setdefault(rec.family, []).append(z)
    for name, zs in by_family.items():
        centroid = np.mean(zs, axis=0)
        evaluator.family_centroids[name] = centroid / np.linalg.norm(centroid)
    return evaluator
