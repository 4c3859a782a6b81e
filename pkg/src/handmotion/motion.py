"""Core motion types: bimanual parameter tracks, a fixed skeleton, and FK.

A hand is parameterized per frame by a 9-dim trajectory (6D global rotation
plus a 3D translation in meters) and a 90-dim pose (15 joints, 6D rotation
each). Two hands flatten to a 198-dim feature row per frame, laid out as
[traj_L | pose_L | traj_R | pose_R].

Arrays are stored float32 throughout; rotation math upcasts to float64
internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError
from .rotations import matrices_from_rot6d

TRAJ_DIM = 9
POSE_DIM = 90
HAND_DIM = TRAJ_DIM + POSE_DIM
FRAME_DIM = 2 * HAND_DIM  # 198
NUM_JOINTS = 15  # articulated joints; FK also emits the wrist root


@dataclass
class HandTrack:
    """Per-frame trajectory (Nx9) and pose (Nx90) of one hand."""

    trajectory: np.ndarray
    pose: np.ndarray

    def __post_init__(self):
        self.trajectory = np.ascontiguousarray(self.trajectory, dtype=np.float32)
        self.pose = np.ascontiguousarray(self.pose, dtype=np.float32)
        if self.trajectory.ndim != 2 or self.trajectory.shape[1] != TRAJ_DIM:
            raise ValidationError(
                f"trajectory must be Nx{TRAJ_DIM}, got {self.trajectory.shape}"
            )
        if self.pose.ndim != 2 or self.pose.shape[1] != POSE_DIM:
            raise ValidationError(f"pose must be Nx{POSE_DIM}, got {self.pose.shape}")
        if self.trajectory.shape[0] != self.pose.shape[0]:
            raise ValidationError("trajectory and pose frame counts differ")
        if not (np.all(np.isfinite(self.trajectory)) and np.all(np.isfinite(self.pose))):
            raise ValidationError("hand track contains non-finite values")

    @property
    def frames(self) -> int:
        return self.trajectory.shape[0]

    def global_rotations(self) -> np.ndarray:
        """Nx3x3 global rotation matrices (raises on degenerate blocks)."""
        return matrices_from_rot6d(self.trajectory[:, :6])

    def translations(self) -> np.ndarray:
        return self.trajectory[:, 6:9].astype(np.float64)

    def joint_rotations(self) -> np.ndarray:
        """Nx15x3x3 local joint rotation matrices."""
        n = self.frames
        return matrices_from_rot6d(self.pose.reshape(n, NUM_JOINTS, 6))

    def validate_rotations(self) -> None:
        """Raise if any 6D block is degenerate; cheap vectorized sweep."""
        self.global_rotations()
        self.joint_rotations()


@dataclass
class MotionSequence:
    """A bimanual motion clip; the universal currency of the package."""

    left: HandTrack
    right: HandTrack
    fps: float = 30.0

    def __post_init__(self):
        if self.left.frames != self.right.frames:
            raise ValidationError("left and right tracks have different frame counts")
        if self.left.frames < 1:
            raise ValidationError("a motion sequence needs at least one frame")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")

    @property
    def frames(self) -> int:
        return self.left.frames

    def swapped(self) -> "MotionSequence":
        return MotionSequence(left=self.right, right=self.left, fps=self.fps)


def flatten(m: MotionSequence) -> np.ndarray:
    """Pack a sequence into an Nx198 array: [traj_L | pose_L | traj_R | pose_R]."""
    return np.concatenate(
        [m.left.trajectory, m.left.pose, m.right.trajectory, m.right.pose], axis=1
    )


def unflatten(rows: np.ndarray, fps: float = 30.0) -> MotionSequence:
    """Inverse of :func:`flatten`."""
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] != FRAME_DIM:
        raise FormatError(f"expected Nx{FRAME_DIM} rows, got shape {rows.shape}")
    lt = rows[:, :TRAJ_DIM]
    lp = rows[:, TRAJ_DIM:HAND_DIM]
    rt = rows[:, HAND_DIM : HAND_DIM + TRAJ_DIM]
    rp = rows[:, HAND_DIM + TRAJ_DIM :]
    return MotionSequence(
        left=HandTrack(trajectory=lt, pose=lp),
        right=HandTrack(trajectory=rt, pose=rp),
        fps=fps,
    )


@dataclass(frozen=True)
class HandSkeleton:
    """Fixed synthetic skeleton: wrist root plus 5 three-joint finger chains.

    ``parents[j]`` indexes into the FK joint array (0 = wrist). Bone ``j``
    (1-based joint j) extends from its parent along ``rest_directions[j-1]``
    by ``bone_lengths[j-1]`` meters.
    """

    bone_lengths: np.ndarray
    parents: np.ndarray
    rest_directions: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "bone_lengths", np.asarray(self.bone_lengths, np.float64))
        object.__setattr__(self, "parents", np.asarray(self.parents, np.int64))
        object.__setattr__(
            self, "rest_directions", np.asarray(self.rest_directions, np.float64)
        )
        if self.bone_lengths.shape != (NUM_JOINTS,):
            raise ValidationError("expected 15 bone lengths")
        if np.any(self.bone_lengths <= 0):
            raise ValidationError("bone lengths must be positive")
        if self.parents.shape != (NUM_JOINTS + 1,) or self.parents[0] != -1:
            raise ValidationError("parents must cover 16 joints with root parent -1")
        # every non-root joint must hang off a lower-numbered joint (acyclic)
        if np.any(self.parents[1:] >= np.arange(1, NUM_JOINTS + 1)):
            raise ValidationError("kinematic tree is not topologically ordered")

    @property
    def num_joints(self) -> int:
        return NUM_JOINTS + 1


def _unit(v):
    v = np.asarray(v, np.float64)
    return v / np.linalg.norm(v)


def default_skeleton() -> HandSkeleton:
    """The repo's fixed hand skeleton (lengths in meters, right-hand rest pose).

    Joint order after the wrist: thumb, index, middle, ring, pinky, each as
    a knuckle->mid->tip chain sharing one rest direction so the rest pose is
    five straight rays fanning out of the wrist.
    """
    finger_dirs = {
        "thumb": _unit([0.55, 0.80, 0.0]),
        "index": _unit([0.97, 0.24, 0.0]),
        "middle": _unit([1.0, 0.0, 0.0]),
        "ring": _unit([0.97, -0.24, 0.0]),
        "pinky": _unit([0.91, -0.42, 0.0]),
    }
    segment_lengths = {
        "thumb": [0.046, 0.032, 0.030],
        "index": [0.095, 0.037, 0.026],
        "middle": [0.092, 0.042, 0.029],
        "ring": [0.088, 0.039, 0.027],
        "pinky": [0.082, 0.030, 0.022],
    }
    lengths, dirs, parents = [], [], [-1]
    for fi, name in enumerate(["thumb", "index", "middle", "ring", "pinky"]):
        base = 1 + 3 * fi
        parents.extend([0, base, base + 1])
        lengths.extend(segment_lengths[name])
        dirs.extend([finger_dirs[name]] * 3)
    return HandSkeleton(
        bone_lengths=np.array(lengths),
        parents=np.array(parents),
        rest_directions=np.array(dirs),
    )


def forward_kinematics(track: HandTrack, skeleton: HandSkeleton) -> np.ndarray:
    """Joint positions (Nx16x3, meters) for one hand track.

    The wrist sits at the trajectory translation with the global rotation;
    each child joint is placed at parent position + parent global rotation
    applied to its rest offset.
    """
    n = track.frames
    globals_ = np.empty((n, NUM_JOINTS + 1, 3, 3), dtype=np.float64)
    positions = np.empty((n, NUM_JOINTS + 1, 3), dtype=np.float64)
    globals_[:, 0] = track.global_rotations()
    positions[:, 0] = track.translations()
    local = track.joint_rotations()
    offsets = skeleton.bone_lengths[:, None] * skeleton.rest_directions
    for j in range(1, NUM_JOINTS + 1):
        p = skeleton.parents[j]
        parent_rot = globals_[:, p]
        positions[:, j] = positions[:, p] + np.einsum(
            "nij,j->ni", parent_rot, offsets[j - 1]
        )
        globals_[:, j] = parent_rot @ local[:, j - 1]
    return positions
