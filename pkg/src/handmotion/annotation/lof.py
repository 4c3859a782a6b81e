"""Local Outlier Factor over caption embeddings.

LOF compares each point's local reachability density with that of its k
nearest neighbors; scores near 1 mean inlier, larger means more isolated.
Captions embed as hashed character n-gram count vectors, which is
deterministic and separates gibberish from templated text.
"""

from __future__ import annotations

import warnings
import zlib

import numpy as np

from ..errors import ValidationError

_DENSITY_EPS = 1e-12


def lof_scores(points: np.ndarray, k: int) -> np.ndarray:
    """Standard LOF with Euclidean metric; neighbor ties break by index."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValidationError("points must be an MxF array")
    m = points.shape[0]
    if not m > k >= 1:
        raise ValidationError(f"need M > k >= 1, got M={m}, k={k}")

    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    # k nearest neighbors excluding self; stable sort keeps low-index ties first
    order = np.argsort(dist, axis=1, kind="stable")
    neighbors = np.empty((m, k), dtype=np.int64)
    for i in range(m):
        row = order[i]
        neighbors[i] = row[row != i][:k]

    k_dist = dist[np.arange(m), neighbors[:, -1]]
    # reach(i, o) = max(k_dist(o), d(i, o)) for o among i's neighbors
    reach = np.maximum(k_dist[neighbors], dist[np.arange(m)[:, None], neighbors])
    lrd = 1.0 / np.maximum(reach.mean(axis=1), _DENSITY_EPS)
    return lrd[neighbors].mean(axis=1) / lrd


class NgramHashEmbedder:
    """Hashed character n-gram counts, L2 normalized. Deterministic."""

    def __init__(self, dim: int = 256, n: int = 3):
        self.dim = dim
        self.n = n

    def __call__(self, caption: str) -> np.ndarray:
        text = f" {caption.lower().strip()} "
        vec = np.zeros(self.dim, dtype=np.float64)
        for i in range(max(0, len(text) - self.n + 1)):
            gram = text[i : i + self.n]
            vec[zlib.crc32(gram.encode()) % self.dim] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def filter_annotations(
    records,
    embedder=None,
    k: int = 5,
    lof_threshold: float = 1.5,
):
    """Drop records whose caption embedding has LOF above the threshold.

    With fewer than k+1 records the filter is a no-op (with a warning).
    Returns (kept records, {id: lof score}).
    """
    embedder = embedder or NgramHashEmbedder()
    if len(records) < k + 1:
        warnings.warn(
            f"LOF filter skipped: {len(records)} records <= k={k}", stacklevel=2
        )
        return list(records), {}
    points = np.stack([embedder(rec.caption_fine) for rec in records])
    scores = lof_scores(points, k)
    kept = [rec for rec, s in zip(records, scores) if s <= lof_threshold]
    return kept, {rec.id: float(s) for rec, s in zip(records, scores)}
