"""Unified text+motion vocabulary and the interleaved token stream codec.

Motion tokens occupy one contiguous id block right after the text ids:
trajectory codes map to ``<motion_token{i}>`` for i in [0, K) and pose codes
to ``<motion_token{K+i}>``. Four specials (<som>, <eom>, <pad>, <mask>) sit
after the motion block. A motion span interleaves per time step as
(traj_L, pose_L, traj_R, pose_R) between <som> and <eom>, so a span of T
steps is 4T+2 ids long.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .errors import CodecError, ValidationError, VocabularyError

SOM, EOM, PAD, MASK = "<som>", "<eom>", "<pad>", "<mask>"
SPECIALS = (SOM, EOM, PAD, MASK)

UNK_TOKEN = "<unk>"
EOS_TOKEN = "<eos>"

_WORD_RE = re.compile(r"[a-z0-9']+")


class TextTokenizer:
    """Deterministic lowercase word-level tokenizer with a fixed lexicon."""

    def __init__(self, words: list[str]):
        reserved = {UNK_TOKEN, EOS_TOKEN}
        vocab = [UNK_TOKEN, EOS_TOKEN] + sorted(set(words) - reserved)
        self.words = vocab
        self._ids = {w: i for i, w in enumerate(vocab)}

    @classmethod
    def from_corpus(cls, texts: list[str]) -> "TextTokenizer":
        seen = set()
        for text in texts:
            seen.update(_WORD_RE.findall(text.lower()))
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self.words)

    @property
    def unk_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    def tokenize(self, text: str) -> list[str]:
        return _WORD_RE.findall(text.lower())

    def encode(self, text: str, add_eos: bool = False) -> list[int]:
        ids = [self._ids.get(w, self.unk_id) for w in self.tokenize(text)]
        if add_eos:
            ids.append(self.eos_id)
        return ids

    def decode(self, ids) -> str:
        out = []
        for i in ids:
            if i == self.eos_id:
                break
            if i == self.unk_id:
                continue
            out.append(self.words[i])
        return " ".join(out)

    def fingerprint(self) -> str:
        return hashlib.sha256("\x00".join(self.words).encode()).hexdigest()


@dataclass
class MotionTokens:
    """Four per-hand, per-modality codebook index streams of equal length."""

    traj_l: np.ndarray
    pose_l: np.ndarray
    traj_r: np.ndarray
    pose_r: np.ndarray
    original_n: int | None = None

    def __post_init__(self):
        for name in ("traj_l", "pose_l", "traj_r", "pose_r"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        lengths = {s.shape for s in self.streams()}
        if len(lengths) != 1 or next(iter(lengths)) != (self.steps,):
            raise CodecError(f"streams must share one length, got {lengths}")

    def streams(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.traj_l, self.pose_l, self.traj_r, self.pose_r

    @property
    def steps(self) -> int:
        return len(self.traj_l)

    def swapped_hands(self) -> "MotionTokens":
        return MotionTokens(
            traj_l=self.traj_r,
            pose_l=self.pose_r,
            traj_r=self.traj_l,
            pose_r=self.pose_l,
            original_n=self.original_n,
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MotionTokens)
            and all(np.array_equal(a, b) for a, b in zip(self.streams(), other.streams()))
            and self.original_n == other.original_n
        )


@dataclass(frozen=True)
class TokenStream:
    """A sequence of unified-vocabulary ids."""

    ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


class Vocabulary:
    """Text block, stacked trajectory+pose motion block, then specials."""

    def __init__(self, text_tokenizer: TextTokenizer, codebook_size: int):
        if codebook_size < 2:
            raise ValidationError("codebook size must be >= 2")
        self.text = text_tokenizer
        self.K = codebook_size
        self.text_size = len(text_tokenizer)
        self.traj_offset = self.text_size
        self.pose_offset = self.text_size + codebook_size
        self.motion_size = 2 * codebook_size
        base = self.text_size + self.motion_size
        self.som_id, self.eom_id, self.pad_id, self.mask_id = range(base, base + 4)
        self.size = base + 4

    @property
    def motion_offset(self) -> int:
        return self.traj_offset

    def traj_id(self, index: int) -> int:
        if not 0 <= index < self.K:
            raise VocabularyError(f"trajectory code {index} outside [0, {self.K})")
        return self.traj_offset + index

    def pose_id(self, index: int) -> int:
        if not 0 <= index < self.K:
            raise VocabularyError(f"pose code {index} outside [0, {self.K})")
        return self.pose_offset + index

    def is_traj(self, token_id: int) -> bool:
        return self.traj_offset <= token_id < self.pose_offset

    def is_pose(self, token_id: int) -> bool:
        return self.pose_offset <= token_id < self.pose_offset + self.K

    def kind(self, token_id: int) -> str:
        if 0 <= token_id < self.text_size:
            return "text"
        if self.text_size <= token_id < self.text_size + self.motion_size:
            return "motion"
        if token_id < self.size:
            return "special"
        raise VocabularyError(f"id {token_id} outside vocabulary of size {self.size}")

    def kinds(self, stream: TokenStream) -> list[str]:
        return [self.kind(i) for i in stream]

    def motion_index(self, token_id: int) -> tuple[str, int]:
        if self.is_traj(token_id):
            return "traj", token_id - self.traj_offset
        if self.is_pose(token_id):
            return "pose", token_id - self.pose_offset
        raise VocabularyError(f"id {token_id} is not a motion token")

    def symbol(self, token_id: int) -> str:
        kind = self.kind(token_id)
        if kind == "text":
            return self.text.words[token_id]
        if kind == "motion":
            return f"<motion_token{token_id - self.traj_offset}>"
        return SPECIALS[token_id - self.som_id]

    def id_of_symbol(self, symbol: str) -> int:
        if symbol in SPECIALS:
            return self.som_id + SPECIALS.index(symbol)
        m = re.fullmatch(r"<motion_token(\d+)>", symbol)
        if m:
            idx = int(m.group(1))
            if not 0 <= idx < self.motion_size:
                raise VocabularyError(f"motion symbol index {idx} out of range")
            return self.traj_offset + idx
        if symbol in self.text._ids:
            return self.text._ids[symbol]
        raise VocabularyError(f"unknown symbol {symbol!r}")

    def to_symbols(self, stream: TokenStream) -> list[str]:
        return [self.symbol(i) for i in stream]

    def from_symbols(self, symbols: list[str]) -> TokenStream:
        return TokenStream(ids=tuple(self.id_of_symbol(s) for s in symbols))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.text.fingerprint().encode())
        h.update(str(self.K).encode())
        return h.hexdigest()


def interleave(tokens: MotionTokens, vocab: Vocabulary) -> TokenStream:
    """(traj_L, pose_L, traj_R, pose_R) per step, bracketed by <som>/<eom>."""
    for s in tokens.streams():
        if len(s) and (s.min() < 0 or s.max() >= vocab.K):
            raise CodecError(f"codebook index outside [0, {vocab.K})")
    ids = [vocab.som_id]
    for t in range(tokens.steps):
        ids.extend(
            (
                vocab.traj_id(int(tokens.traj_l[t])),
                vocab.pose_id(int(tokens.pose_l[t])),
                vocab.traj_id(int(tokens.traj_r[t])),
                vocab.pose_id(int(tokens.pose_r[t])),
            )
        )
    ids.append(vocab.eom_id)
    return TokenStream(ids=tuple(ids))


_SLOT_IS_TRAJ = (True, False, True, False)


def deinterleave(stream: TokenStream, vocab: Vocabulary) -> MotionTokens:
    """Exact inverse of :func:`interleave`; errors cite the stream position."""
    ids = stream.ids
    if not ids or ids[0] != vocab.som_id:
        raise CodecError("stream does not start with <som>", position=0)
    if vocab.eom_id not in ids:
        raise CodecError("stream has no <eom>", position=len(ids) - 1)
    end = ids.index(vocab.eom_id)
    if end != len(ids) - 1:
        raise CodecError("tokens found after <eom>", position=end + 1)
    span = ids[1:end]
    if len(span) % 4 != 0:
        raise CodecError(
            f"motion span length {len(span)} is not a multiple of 4", position=end
        )
    slots: list[list[int]] = [[], [], [], []]
    for offset, token_id in enumerate(span):
        position = offset + 1
        slot = offset % 4
        if token_id >= vocab.pose_offset + vocab.K or token_id < 0:
            raise CodecError(f"id {token_id} is not a motion token", position=position)
        if _SLOT_IS_TRAJ[slot]:
            if not vocab.is_traj(token_id):
                raise CodecError(
                    "trajectory slot holds a non-trajectory id", position=position
                )
            slots[slot].append(token_id - vocab.traj_offset)
        else:
            if not vocab.is_pose(token_id):
                raise CodecError("pose slot holds a non-pose id", position=position)
            slots[slot].append(token_id - vocab.pose_offset)
    return MotionTokens(
        traj_l=np.array(slots[0], dtype=np.int64),
        pose_l=np.array(slots[1], dtype=np.int64),
        traj_r=np.array(slots[2], dtype=np.int64),
        pose_r=np.array(slots[3], dtype=np.int64),
    )


def repair(stream: TokenStream | list[int], vocab: Vocabulary) -> TokenStream:
    """Normalize an arbitrary id sequence into a decodable motion span.

    Deterministic policy: start at the first <som> (or at the head if it
    already looks like motion), truncate at the first structural violation,
    drop any trailing partial 4-step group, and close with <eom>.
    """
    ids = list(stream.ids if isinstance(stream, TokenStream) else stream)

    def safe_kind(token_id):
        try:
            return vocab.kind(token_id)
        except VocabularyError:
            return "invalid"

    if vocab.som_id in ids:
        start = ids.index(vocab.som_id) + 1
    elif ids and safe_kind(ids[0]) == "motion":
        start = 0
    else:
        return TokenStream(ids=(vocab.som_id, vocab.eom_id))

    count = 0
    for token_id in ids[start:]:
        slot = count % 4
        valid = (
            vocab.is_traj(token_id) if _SLOT_IS_TRAJ[slot] else vocab.is_pose(token_id)
        )
        if not valid:
            break
        count += 1
    count -= count % 4
    span = ids[start : start + count]
    return TokenStream(ids=(vocab.som_id, *span, vocab.eom_id))
