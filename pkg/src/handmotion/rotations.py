"""Rotation math: 6D representation, Gram-Schmidt reconstruction, geodesics.

A rotation is encoded as the first two columns of its matrix, concatenated
into a 6-vector (column 0 first). Reconstruction orthonormalizes the two
vectors and completes the frame with their cross product, so the encoding
is scale-invariant and continuous.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateRotationError, ValidationError

# Two 6D column vectors count as parallel below this cross-product norm.
DEGENERACY_EPS = 1e-9

_ORTHO_TOL = 1e-6


def rot6d_from_matrix(R: np.ndarray) -> np.ndarray:
    """Encode a rotation matrix as its first two columns, concatenated."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValidationError(f"expected a 3x3 matrix, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValidationError("rotation matrix contains non-finite values")
    if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
        raise ValidationError("matrix is not orthonormal within 1e-6")
    if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
        raise ValidationError("matrix determinant is not +1 within 1e-6")
    return np.concatenate([R[:, 0], R[:, 1]])


def matrix_from_rot6d(v: np.ndarray) -> np.ndarray:
    """Rebuild a rotation matrix from a 6-vector via Gram-Schmidt."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (6,):
        raise ValidationError(f"expected a 6-vector, got shape {v.shape}")
    a1, a2 = v[:3], v[3:]
    if np.linalg.norm(np.cross(a1, a2)) < DEGENERACY_EPS:
        raise DegenerateRotationError(
            "6D rotation columns are (near-)parallel; cannot orthonormalize"
        )
    b1 = a1 / np.linalg.norm(a1)
    u2 = a2 - (b1 @ a2) * b1
    b2 = u2 / np.linalg.norm(u2)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def matrices_from_rot6d(v: np.ndarray) -> np.ndarray:
    """Vectorized Gram-Schmidt over an array of 6-vectors (...x6 -> ...x3x3)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != 6:
        raise ValidationError(f"last dimension must be 6, got {v.shape[-1]}")
    a1, a2 = v[..., :3], v[..., 3:]
    cross_norm = np.linalg.norm(np.cross(a1, a2), axis=-1)
    if np.any(cross_norm < DEGENERACY_EPS):
        bad = np.argwhere(cross_norm < DEGENERACY_EPS)[0]
        raise DegenerateRotationError(
            f"degenerate 6D rotation block at index {tuple(bad)}"
        )
    b1 = a1 / np.linalg.norm(a1, axis=-1, keepdims=True)
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    b2 = u2 / np.linalg.norm(u2, axis=-1, keepdims=True)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def rot6d_from_matrices(R: np.ndarray) -> np.ndarray:
    """Vectorized encoder (...x3x3 -> ...x6); skips per-matrix validation."""
    R = np.asarray(R, dtype=np.float64)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def geodesic_angle(Ra: np.ndarray, Rb: np.ndarray) -> np.ndarray:
    """Rotation angle of Ra^T Rb, i.e. the geodesic distance in SO(3)."""
    rel = np.swapaxes(Ra, -1, -2) @ Rb
    tr = np.trace(rel, axis1=-2, axis2=-1)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues formula for a unit axis and an angle in radians."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (QR of a Gaussian, sign-fixed)."""
    A = rng.standard_normal((3, 3))
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q
