"""Part/modality-decomposed VQ motion tokenizer.

Trajectory and pose run through separate temporal-convolutional
autoencoders with their own codebooks; left and right hands share the same
weights and codebooks and are processed as batch rows. Quantization snaps
each latent row to its nearest codebook entry (ties to the lowest index)
and trains through a straight-through estimator with codebook and
commitment terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..codec import MotionTokens
from ..errors import EmptyInputError, ValidationError, VocabularyError
from ..motion import HandTrack, MotionSequence, POSE_DIM, TRAJ_DIM, flatten


@dataclass(frozen=True)
class TokenizerConfig:
    codebook_size: int = 4096
    code_dim: int = 64
    downsample: int = 8
    width: int = 128
    beta: float = 0.25

    def __post_init__(self):
        levels = int(round(math.log2(self.downsample)))
        if self.downsample < 1 or 2**levels != self.downsample:
            raise ValidationError("downsample must be a power of two >= 1")
        if self.codebook_size < 2:
            raise ValidationError("codebook size must be >= 2")

    @property
    def levels(self) -> int:
        return int(round(math.log2(self.downsample)))


class Codebook(nn.Module):
    """K x d learnable entries with nearest-neighbor lookup and usage stats."""

    def __init__(self, size: int, dim: int):
        super().__init__()
        self.size = size
        self.dim = dim
        self.entries = nn.Parameter(torch.randn(size, dim) / math.sqrt(dim))
        self.register_buffer("usage", torch.zeros(size, dtype=torch.long))

    @torch.no_grad()
    def nearest(self, latents: torch.Tensor, chunk: int = 64) -> torch.Tensor:
        """Indices of the closest entries; exact distances, ties to lowest index."""
        latents = latents.detach()
        entries = self.entries.detach()
        out = []
        for start in range(0, latents.shape[0], chunk):
            block = latents[start : start + chunk]
            diff = block[:, None, :] - entries[None, :, :]
            dist = (diff * diff).sum(-1)
            out.append(np.argmin(dist.cpu().numpy(), axis=1))
        return torch.from_numpy(np.concatenate(out) if out else np.zeros(0, np.int64))

    def quantize(self, latents: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(indices, quantized rows); quantized rows are exact codebook rows."""
        if not torch.isfinite(latents).all():
            raise ValidationError("latents contain non-finite values")
        flat = latents.reshape(-1, self.dim)
        idx = self.nearest(flat)
        quantized = self.entries[idx].reshape(latents.shape)
        return idx.reshape(latents.shape[:-1]), quantized

    def lookup(self, indices: torch.Tensor) -> torch.Tensor:
        if indices.numel() and int(indices.max()) >= self.size:
            raise VocabularyError(
                f"code index {int(indices.max())} outside codebook of size {self.size}"
            )
        if indices.numel() and int(indices.min()) < 0:
            raise VocabularyError("negative code index")
        return self.entries[indices]

    def record_usage(self, indices: torch.Tensor) -> None:
        self.usage += torch.bincount(indices.reshape(-1), minlength=self.size)

    def perplexity(self) -> float:
        total = int(self.usage.sum())
        if total == 0:
            return 1.0
        p = self.usage.double() / total
        p = p[p > 0]
        return float(torch.exp(-(p * p.log()).sum()))

    @torch.no_grad()
    def reseed_dead(self, pool: torch.Tensor, rng: np.random.Generator) -> int:
        """Replace unused entries with random rows from the latent pool."""
        dead = torch.nonzero(self.usage == 0).reshape(-1)
        if dead.numel() == 0 or pool.shape[0] == 0:
            return 0
        picks = rng.integers(0, pool.shape[0], size=dead.numel())
        self.entries[dead] = pool[torch.from_numpy(picks)].to(self.entries.dtype)
        return int(dead.numel())

    def reset_usage(self) -> None:
        self.usage.zero_()


class ResidualBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv1d(width, width, 3, padding=1),
            nn.ReLU(),
            nn.Conv1d(width, width, 1),
        )

    def forward(self, x):
        return x + self.block(x)


class ModalityAutoencoder(nn.Module):
    """Strided temporal conv encoder/decoder pair for one channel width."""

    def __init__(self, channels: int, width: int, code_dim: int, downsample: int):
        super().__init__()
        self.channels = channels
        self.downsample = downsample
        levels = int(round(math.log2(downsample)))
        enc: list[nn.Module] = [nn.Conv1d(channels, width, 3, padding=1), nn.ReLU()]
        for _ in range(levels):
            enc += [nn.Conv1d(width, width, 4, stride=2, padding=1), ResidualBlock(width)]
        enc += [nn.Conv1d(width, code_dim, 3, padding=1)]
        self.encoder = nn.Sequential(*enc)

        dec: list[nn.Module] = [nn.Conv1d(code_dim, width, 3, padding=1)]
        for _ in range(levels):
            dec += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv1d(width, width, 3, padding=1),
                ResidualBlock(width),
            ]
        dec += [nn.ReLU(), nn.Conv1d(width, channels, 3, padding=1)]
        self.decoder = nn.Sequential(*dec)

    def encode(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, N, C) -> (B, N/r, d); N must be divisible by the downsample."""
        if frames.shape[1] % self.downsample != 0:
            raise ValidationError(
                f"frame count {frames.shape[1]} not divisible by {self.downsample}"
            )
        return self.encoder(frames.transpose(1, 2)).transpose(1, 2)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        """(B, T, d) -> (B, T*r, C)."""
        return self.decoder(latents.transpose(1, 2)).transpose(1, 2)


def pad_to_multiple(frames: np.ndarray, multiple: int) -> np.ndarray:
    """Right-pad by repeating the last frame up to the next multiple."""
    n = frames.shape[0]
    if n == 0:
        raise EmptyInputError("cannot pad an empty sequence")
    target = ((n + multiple - 1) // multiple) * multiple
    if target == n:
        return frames
    tail = np.repeat(frames[-1:], target - n, axis=0)
    return np.concatenate([frames, tail], axis=0)


class MotionTokenizer(nn.Module):
    """Bimanual motion <-> four discrete index streams."""

    def __init__(self, config: TokenizerConfig | None = None):
        super().__init__()
        self.config = config or TokenizerConfig()
        c = self.config
        self.traj_ae = ModalityAutoencoder(TRAJ_DIM, c.width, c.code_dim, c.downsample)
        self.pose_ae = ModalityAutoencoder(POSE_DIM, c.width, c.code_dim, c.downsample)
        self.traj_codebook = Codebook(c.codebook_size, c.code_dim)
        self.pose_codebook = Codebook(c.codebook_size, c.code_dim)
        self.beta = c.beta
        self.register_buffer("traj_mean", torch.zeros(TRAJ_DIM))
        self.register_buffer("traj_std", torch.ones(TRAJ_DIM))
        self.register_buffer("pose_mean", torch.zeros(POSE_DIM))
        self.register_buffer("pose_std", torch.ones(POSE_DIM))

    @property
    def downsample(self) -> int:
        return self.config.downsample

    @torch.no_grad()
    def fit_normalization(self, records) -> None:
        rows = np.concatenate([flatten(r.motion) for r in records], axis=0)
        traj = np.concatenate([rows[:, 0:9], rows[:, 99:108]], axis=0)
        pose = np.concatenate([rows[:, 9:99], rows[:, 108:198]], axis=0)
        for name, block in (("traj", traj), ("pose", pose)):
            mean = torch.from_numpy(block.mean(axis=0)).float()
            std = torch.from_numpy(block.std(axis=0)).float().clamp_min(1e-4)
            getattr(self, f"{name}_mean").copy_(mean)
            getattr(self, f"{name}_std").copy_(std)

    def normalize(self, traj: torch.Tensor, pose: torch.Tensor):
        return (traj - self.traj_mean) / self.traj_std, (pose - self.pose_mean) / self.pose_std

    def denormalize(self, traj: torch.Tensor, pose: torch.Tensor):
        return traj * self.traj_std + self.traj_mean, pose * self.pose_std + self.pose_mean

    def _stack_hands(self, m: MotionSequence) -> tuple[torch.Tensor, torch.Tensor]:
        """(2, Npad, 9) and (2, Npad, 90) tensors, left first, normalized."""
        r = self.downsample
        traj = np.stack(
            [
                pad_to_multiple(m.left.trajectory, r),
                pad_to_multiple(m.right.trajectory, r),
            ]
        )
        pose = np.stack(
            [pad_to_multiple(m.left.pose, r), pad_to_multiple(m.right.pose, r)]
        )
        return self.normalize(torch.from_numpy(traj).float(), torch.from_numpy(pose).float())

    @torch.no_grad()
    def encode(self, m: MotionSequence) -> MotionTokens:
        if m.frames == 0:
            raise EmptyInputError("cannot encode an empty motion")
        traj, pose = self._stack_hands(m)
        z_traj = self.traj_ae.encode(traj)
        z_pose = self.pose_ae.encode(pose)
        idx_traj, _ = self.traj_codebook.quantize(z_traj)
        idx_pose, _ = self.pose_codebook.quantize(z_pose)
        return MotionTokens(
            traj_l=idx_traj[0].cpu().numpy(),
            pose_l=idx_pose[0].cpu().numpy(),
            traj_r=idx_traj[1].cpu().numpy(),
            pose_r=idx_pose[1].cpu().numpy(),
            original_n=m.frames,
        )

    @torch.no_grad()
    def decode(self, tokens: MotionTokens, original_n: int | None = None) -> MotionSequence:
        if tokens.steps == 0:
            raise EmptyInputError("cannot decode an empty token set")
        n = original_n if original_n is not None else tokens.original_n
        if n is None:
            n = tokens.steps * self.downsample
        idx_traj = torch.from_numpy(np.stack([tokens.traj_l, tokens.traj_r]))
        idx_pose = torch.from_numpy(np.stack([tokens.pose_l, tokens.pose_r]))
        traj = self.traj_ae.decode(self.traj_codebook.lookup(idx_traj))
        pose = self.pose_ae.decode(self.pose_codebook.lookup(idx_pose))
        traj, pose = self.denormalize(traj, pose)
        traj = traj.cpu().numpy()[:, :n]
        pose = pose.cpu().numpy()[:, :n]
        return MotionSequence(
            left=HandTrack(trajectory=traj[0], pose=pose[0]),
            right=HandTrack(trajectory=traj[1], pose=pose[1]),
            fps=30.0,
        )

    def decode_latents(
        self, traj_latents: torch.Tensor, pose_latents: torch.Tensor
    ) -> torch.Tensor:
        """Differentiable decode of per-hand latents into flattened frames.

        traj_latents, pose_latents: (2, T, d), left hand first. Returns
        (T*r, 198) original-unit features, kept on the autograd tape.
        """
        traj = self.traj_ae.decode(traj_latents)
        pose = self.pose_ae.decode(pose_latents)
        traj, pose = self.denormalize(traj, pose)
        return torch.cat([traj[0], pose[0], traj[1], pose[1]], dim=1)

    def vq_terms(self, traj: torch.Tensor, pose: torch.Tensor) -> dict:
        """Loss pieces for normalized (2B, N, C) inputs (left rows then right).

        Straight-through estimator: the decoder sees latent + sg[quantized -
        latent], so reconstruction gradients reach the encoder unchanged.
        """
        parts = {}
        recon, halves = [], []
        for name, ae, codebook, x in (
            ("traj", self.traj_ae, self.traj_codebook, traj),
            ("pose", self.pose_ae, self.pose_codebook, pose),
        ):
            z = ae.encode(x)
            idx, q = codebook.quantize(z)
            st = z + (q - z).detach()
            recon.append(ae.decode(st))
            halves.append((z, q))
            parts[f"idx_{name}"] = idx
            parts[f"z_{name}"] = z.detach()
        rec = torch.mean(
            (torch.cat(recon, dim=2) - torch.cat([traj, pose], dim=2)) ** 2
        )
        half = traj.shape[0] // 2
        codebook_term = 0.0
        commit_term = 0.0
        for z, q in halves:
            for rows in (slice(0, half), slice(half, None)):
                codebook_term = codebook_term + torch.mean(
                    (q[rows] - z[rows].detach()) ** 2
                )
                commit_term = commit_term + torch.mean((z[rows] - q[rows].detach()) ** 2)
        parts.update(
            rec=rec,
            codebook=codebook_term,
            commit=self.beta * commit_term,
        )
        parts["loss"] = rec + codebook_term + self.beta * commit_term
        return parts

    def vq_loss(self, m: MotionSequence) -> dict:
        """Quantization objective for one sequence; values are scalars."""
        traj, pose = self._stack_hands(m)
        parts = self.vq_terms(traj, pose)
        detach = lambda v: float(v.detach()) if torch.is_tensor(v) else float(v)
        return {
            "loss": detach(parts["loss"]),
            "rec": detach(parts["rec"]),
            "codebook": detach(parts["codebook"]),
            "commit": detach(parts["commit"]),
        }


def build_tokenizer(config: TokenizerConfig | None = None, seed: int = 0) -> MotionTokenizer:
    torch.manual_seed(seed)
    return MotionTokenizer(config)
