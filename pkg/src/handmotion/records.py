"""Dataset record type shared by generation, curation, and persistence."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .motion import MotionSequence, flatten

# (filter name, passed, score) entries accumulated by the curation pipeline.
FilterDecision = tuple[str, bool, float]


@dataclass
class SequenceRecord:
    """One persisted dataset entry: motion, captions, and provenance."""

    id: str
    motion: MotionSequence
    caption_high: str
    caption_fine: str
    visibility: np.ndarray
    filter_log: list[FilterDecision] = field(default_factory=list)

    def __post_init__(self):
        self.visibility = np.asarray(self.visibility, dtype=bool)
        if self.visibility.shape != (self.motion.frames, 2):
            raise ValidationError(
                f"visibility must be Nx2, got {self.visibility.shape} for "
                f"N={self.motion.frames}"
            )

    @property
    def family(self) -> str:
        """Generator family encoded as the id prefix (before the first dash)."""
        return self.id.split("-", 1)[0]


def corpus_fingerprint(records: list[SequenceRecord]) -> str:
    """Stable content hash of a record list (ids, captions, motion bytes)."""
    h = hashlib.sha256()
    for rec in records:
        h.update(rec.id.encode())
        h.update(rec.caption_high.encode())
        h.update(rec.caption_fine.encode())
        h.update(np.ascontiguousarray(flatten(rec.motion), dtype=np.float32).tobytes())
    return h.hexdigest()
