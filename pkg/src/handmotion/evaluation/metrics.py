"""Metric suite: retrieval, distribution, language, and joint-space errors."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..motion import HandSkeleton, MotionSequence, forward_kinematics


def r_precision(
    pairs: list[tuple],
    evaluator,
    pool_size: int = 32,
    top_k: int = 3,
    n_pools: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Fraction of pool elements whose true caption ranks in the top k.

    Each pool holds ``pool_size`` (motion, caption) pairs; every motion is
    ranked against all captions in its pool by cosine distance.
    """
    if len(pairs) < pool_size:
        raise ValidationError(f"need at least {pool_size} pairs, got {len(pairs)}")
    rng = rng or np.random.default_rng(0)
    zm = np.asarray(evaluator.embed_motions([m for m, _ in pairs]))
    zt = np.asarray(evaluator.embed_texts([c for _, c in pairs]))
    n_pools = n_pools or max(1, len(pairs) // pool_size)

    hits = 0
    total = 0
    for _ in range(n_pools):
        pool = rng.choice(len(pairs), size=pool_size, replace=False)
        sims = zm[pool] @ zt[pool].T  # cosine similarity of normalized embeddings
        for row in range(pool_size):
            order = np.argsort(-sims[row], kind="stable")
            rank = int(np.where(order == row)[0][0])
            hits += rank < top_k
            total += 1
    return hits / total


def mm_dist(pairs: list[tuple], evaluator) -> float:
    """Mean Euclidean distance between matched motion and text embeddings."""
    zm = np.asarray(evaluator.embed_motions([m for m, _ in pairs]))
    zt = np.asarray(evaluator.embed_texts([c for _, c in pairs]))
    return float(np.mean(np.linalg.norm(zm - zt, axis=1)))


def _poly_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a @ b.T / a.shape[1] + 1.0) ** 3


def kid(
    features_a: np.ndarray,
    features_b: np.ndarray,
    biased: bool = False,
    block_size: int | None = None,
) -> float:
    """Squared kernel MMD with the cubic polynomial kernel.

    Unbiased mode averages the standard unbiased estimator over consecutive
    equal-size blocks (default block size min(M, 100)); biased mode keeps
    the kernel diagonals and is exactly zero for identical multisets.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValidationError("feature arrays must be MxF with a common F")
    if biased:
        kxx = _poly_kernel(a, a).mean()
        kyy = _poly_kernel(b, b).mean()
        kxy = _poly_kernel(a, b).mean()
        return float(kxx + kyy - 2 * kxy)

    m = min(a.shape[0], b.shape[0])
    if m < 2:
        raise ValidationError("unbiased KID needs at least 2 samples per side")
    block = min(block_size or min(m, 100), m)
    n_blocks = m // block
    values = []
    for i in range(n_blocks):
        xa = a[i * block : (i + 1) * block]
        xb = b[i * block : (i + 1) * block]
        kxx = _poly_kernel(xa, xa)
        kyy = _poly_kernel(xb, xb)
        kxy = _poly_kernel(xa, xb)
        n = block
        term_x = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
        term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
        values.append(term_x + term_y - 2 * kxy.mean())
    return float(np.mean(values))


def diversity(
    features: np.ndarray, n_pairs: int = 300, rng: np.random.Generator | None = None
) -> float:
    """Mean distance over uniformly drawn index pairs (with replacement)."""
    features = np.asarray(features, dtype=np.float64)
    rng = rng or np.random.default_rng(0)
    if len(features) < 1:
        raise ValidationError("diversity needs at least one feature row")
    i = rng.integers(0, len(features), size=n_pairs)
    j = rng.integers(0, len(features), size=n_pairs)
    return float(np.mean(np.linalg.norm(features[i] - features[j], axis=1)))


def multimodality(groups: list[np.ndarray]) -> float:
    """Mean pairwise distance within each prompt's repeated generations."""
    per_prompt = []
    for group in groups:
        group = np.asarray(group, dtype=np.float64)
        if len(group) < 2:
            per_prompt.append(0.0)
            continue
        dists = [
            np.linalg.norm(group[i] - group[j])
            for i in range(len(group))
            for j in range(i + 1, len(group))
        ]
        per_prompt.append(float(np.mean(dists)))
    if not per_prompt:
        raise ValidationError("multimodality needs at least one group")
    return float(np.mean(per_prompt))


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: list[str], n: int) -> dict[tuple, int]:
    out: dict[tuple, int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        out[gram] = out.get(gram, 0) + 1
    return out


def bleu(candidate: str, references: list[str] | str, n: int = 4) -> float:
    """BLEU with uniform n-gram weights up to n and a brevity penalty."""
    if isinstance(references, str):
        references = [references]
    if not references:
        raise ValidationError("bleu needs at least one reference")
    cand = _tokens(candidate)
    refs = [_tokens(r) for r in references]
    if not cand:
        return 0.0
    precisions = []
    for order in range(1, n + 1):
        cand_counts = _ngrams(cand, order)
        total = sum(cand_counts.values())
        if total == 0:
            return 0.0
        clipped = 0
        for gram, count in cand_counts.items():
            best_ref = max(_ngrams(r, order).get(gram, 0) for r in refs)
            clipped += min(count, best_ref)
        if clipped == 0:
            return 0.0
        precisions.append(clipped / total)
    # brevity penalty against the closest reference length (ties: shorter)
    c = len(cand)
    r = min((abs(len(r) - c), len(r)) for r in refs)[1]
    bp = 1.0 if c > r else float(np.exp(1 - r / c))
    return float(bp * np.exp(np.mean(np.log(precisions))))


def _lcs_length(a: list[str], b: list[str]) -> int:
    table = np.zeros((len(a) + 1, len(b) + 1), dtype=np.int64)
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i, j] = table[i - 1, j - 1] + 1
            else:
                table[i, j] = max(table[i - 1, j], table[i, j - 1])
    return int(table[len(a), len(b)])


def rouge_l(candidate: str, reference: str) -> float:
    """Longest-common-subsequence F-measure (balanced F1)."""
    cand, ref = _tokens(candidate), _tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def _both_hand_joints(m: MotionSequence, skeleton: HandSkeleton) -> np.ndarray:
    left = forward_kinematics(m.left, skeleton)
    right = forward_kinematics(m.right, skeleton)
    return np.concatenate([left, right], axis=1)  # (N, 32, 3)


def umeyama_align(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Optimal similarity transform (rotation, uniform scale, translation)
    mapping source points onto target in the least-squares sense."""
    mu_s, mu_t = source.mean(axis=0), target.mean(axis=0)
    xs, xt = source - mu_s, target - mu_t
    cov = xt.T @ xs / len(source)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var_s = (xs**2).sum() / len(source)
    scale = np.trace(np.diag(D) @ S) / var_s
    return scale * xs @ R.T + mu_t


def _common_frames(pred: MotionSequence, gt: MotionSequence) -> int:
    n = min(pred.frames, gt.frames)
    if n < 1:
        raise ValidationError("need at least one common frame")
    return n


def mpjpe(pred: MotionSequence, gt: MotionSequence, skeleton: HandSkeleton) -> float:
    """Mean per-joint position error in millimeters."""
    n = _common_frames(pred, gt)
    jp = _both_hand_joints(pred, skeleton)[:n]
    jg = _both_hand_joints(gt, skeleton)[:n]
    return float(np.mean(np.linalg.norm(jp - jg, axis=-1)) * 1000.0)


def pa_mpjpe(pred: MotionSequence, gt: MotionSequence, skeleton: HandSkeleton) -> float:
    """MPJPE after per-frame optimal similarity (Procrustes) alignment."""
    n = _common_frames(pred, gt)
    jp = _both_hand_joints(pred, skeleton)[:n]
    jg = _both_hand_joints(gt, skeleton)[:n]
    errs = []
    for t in range(n):
        aligned = umeyama_align(jp[t], jg[t])
        errs.append(np.mean(np.linalg.norm(aligned - jg[t], axis=-1)))
    return float(np.mean(errs) * 1000.0)


def accel_error(pred: MotionSequence, gt: MotionSequence, skeleton: HandSkeleton) -> float:
    """Mean joint-acceleration error (second differences) in mm/s^2."""
    n = _common_frames(pred, gt)
    if n < 3:
        raise ValidationError("acceleration error needs at least 3 frames")
    jp = _both_hand_joints(pred, skeleton)[:n]
    jg = _both_hand_joints(gt, skeleton)[:n]
    fps2 = float(gt.fps) ** 2
    ap = (jp[2:] - 2 * jp[1:-1] + jp[:-2]) * fps2
    ag = (jg[2:] - 2 * jg[1:-1] + jg[:-2]) * fps2
    return float(np.mean(np.linalg.norm(ap - ag, axis=-1)) * 1000.0)
