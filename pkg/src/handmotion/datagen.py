"""Synthetic captioned bimanual-motion corpus.

Eight parameterized motion families with matching templated captions.
Amplitude, speed, and phase are randomized per sample; the family keyword
appears in both caption levels and as the record id prefix, so downstream
classifiers and caption checks can recover the generating family.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .motion import HandTrack, MotionSequence
from .records import SequenceRecord
from .rotations import axis_angle_matrix, rot6d_from_matrices

FPS = 30.0

FAMILIES = (
    "wave",
    "circle",
    "grasp",
    "pour",
    "press",
    "wipe",
    "knit",
    "clap",
)

FAMILY_KEYWORDS = {f: f for f in FAMILIES}

_BASE_LEFT = np.array([-0.16, 0.0, 0.0])
_BASE_RIGHT = np.array([0.16, 0.0, 0.0])

# per-joint flexion multipliers: knuckle, mid, tip
_CURL_ANGLES = np.array([1.1, 1.2, 0.7])


def _speed_word(freq, lo, hi):
    third = (hi - lo) / 3.0
    if freq < lo + third:
        return "slowly"
    if freq < hi - third:
        return "steadily"
    return "quickly"


def _size_word(amp, lo, hi):
    return "small" if amp < (lo + hi) / 2.0 else "wide"


def _pose_from_curl(curl: np.ndarray) -> np.ndarray:
    """Map per-frame, per-finger curl in [0,1] to Nx90 6D joint rotations.

    Each finger joint flexes about its local y axis by curl times a fixed
    per-segment maximum, so curl=0 is the flat rest pose.
    """
    n, fingers = curl.shape
    if fingers != 5:
        raise ValidationError("curl must be Nx5")
    theta = curl[:, :, None] * _CURL_ANGLES[None, None, :]  # N x 5 x 3
    c, s = np.cos(theta), np.sin(theta)
    blocks = np.zeros((n, 5, 3, 6))
    blocks[..., 0] = c
    blocks[..., 2] = -s
    blocks[..., 4] = 1.0
    return blocks.reshape(n, 90)


def _traj(rotations: np.ndarray, translations: np.ndarray) -> np.ndarray:
    return np.concatenate([rot6d_from_matrices(rotations), translations], axis=1)


def _static_rot(n, axis=(0, 0, 1), angle=0.0):
    return np.tile(axis_angle_matrix(axis, angle), (n, 1, 1))


def _osc_rot(n, axis, base_angle, amp, freq, phase, fps=FPS):
    t = np.arange(n) / fps
    angles = base_angle + amp * np.sin(2 * np.pi * freq * t + phase)
    return np.stack([axis_angle_matrix(axis, a) for a in angles])


def _gen_wave(rng, n):
    t = np.arange(n) / FPS
    freq = rng.uniform(0.5, 1.3)
    amp = rng.uniform(0.05, 0.16)
    phase = rng.uniform(0, 2 * np.pi)
    sway = amp * np.sin(2 * np.pi * freq * t + phase)
    bob = 0.2 * amp * np.sin(4 * np.pi * freq * t + phase)
    left_pos = _BASE_LEFT + np.stack([sway, 0.12 + bob, np.zeros(n)], axis=1)
    right_pos = _BASE_RIGHT + np.stack([-sway, 0.12 + bob, np.zeros(n)], axis=1)
    rot_l = _osc_rot(n, (0, 0, 1), 0.0, 0.2, freq, phase)
    rot_r = _osc_rot(n, (0, 0, 1), 0.0, -0.2, freq, phase)
    curl = np.full((n, 5), 0.1)
    speed, size = _speed_word(freq, 0.5, 1.3), _size_word(amp, 0.05, 0.16)
    return {
        "left": (rot_l, left_pos, curl),
        "right": (rot_r, right_pos, curl),
        "high": "A person waves both hands from side to side in the air.",
        "fine": f"both hands wave {speed} from side to side with {size} open-palm strokes",
    }


def _gen_circle(rng, n):
    t = np.arange(n) / FPS
    freq = rng.uniform(0.4, 1.0)
    amp = rng.uniform(0.05, 0.12)
    phase = rng.uniform(0, 2 * np.pi)
    cx = amp * np.cos(2 * np.pi * freq * t + phase)
    cy = amp * np.sin(2 * np.pi * freq * t + phase)
    right_pos = _BASE_RIGHT + np.stack([cx, 0.08 + cy, np.zeros(n)], axis=1)
    left_pos = np.tile(_BASE_LEFT, (n, 1)) + np.stack(
        [0.004 * np.sin(2 * np.pi * 0.3 * t), np.zeros(n), np.zeros(n)], axis=1
    )
    curl_r = np.tile(np.array([0.6, 0.05, 0.75, 0.8, 0.8]), (n, 1))
    curl_l = np.full((n, 5), 0.3)
    speed, size = _speed_word(freq, 0.4, 1.0), _size_word(amp, 0.05, 0.12)
    return {
        "left": (_static_rot(n), left_pos, curl_l),
        "right": (_static_rot(n), right_pos, curl_r),
        "high": "A person traces a circle in the air with the right index finger.",
        "fine": f"the right hand traces a {size} circle {speed} while the left hand rests",
    }


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def _gen_grasp(rng, n):
    t = np.linspace(0, 1, n)
    reach = rng.uniform(0.05, 0.1)
    speed_f = rng.uniform(0.6, 1.4)
    noun = ["jar", "bottle", "bowl"][rng.integers(0, 3)]
    s = _smoothstep(t * speed_f)
    left_pos = _BASE_LEFT + np.stack([reach * s, 0.02 * s, np.zeros(n)], axis=1)
    right_pos = _BASE_RIGHT + np.stack([-reach * s, 0.02 * s, np.zeros(n)], axis=1)
    curl = np.tile((0.05 + 0.85 * s)[:, None], (1, 5))
    speed = _speed_word(speed_f, 0.6, 1.4)
    return {
        "left": (_static_rot(n), left_pos, curl),
        "right": (_static_rot(n), right_pos, curl),
        "high": f"A person reaches out and grasps a {noun} with both hands.",
        "fine": f"the fingers curl {speed} around the {noun} as both hands grasp it firmly",
    }


def _gen_pour(rng, n):
    t = np.linspace(0, 1, n)
    tilt = rng.uniform(0.8, 1.4)
    freq = rng.uniform(0.5, 1.0)
    noun = ["kettle", "jug", "teapot"][rng.integers(0, 3)]
    bump = _smoothstep(2 * t) * _smoothstep(2 * (1 - t))
    angles = tilt * bump
    rot_r = np.stack([axis_angle_matrix((1, 0, 0), -a) for a in angles])
    right_pos = _BASE_RIGHT + np.stack(
        [-0.04 * bump, 0.05 * bump, 0.03 * bump], axis=1
    )
    left_pos = np.tile(_BASE_LEFT, (n, 1))
    curl_r = np.full((n, 5), 0.7)
    curl_l = np.full((n, 5), 0.55)
    speed = _speed_word(freq, 0.5, 1.0)
    return {
        "left": (_static_rot(n), left_pos, curl_l),
        "right": (rot_r, right_pos, curl_r),
        "high": f"A person pours from a {noun} with the right hand while the left hand holds a cup.",
        "fine": f"the right hand tilts the {noun} {speed} to pour while the left hand holds steady",
    }


def _gen_press(rng, n):
    t = np.arange(n) / FPS
    freq = rng.uniform(1.0, 2.4)
    amp = rng.uniform(0.012, 0.03)
    phase = rng.uniform(0, 2 * np.pi)
    dip_l = amp * 0.5 * (1 - np.cos(2 * np.pi * freq * t + phase))
    dip_r = amp * 0.5 * (1 - np.cos(2 * np.pi * freq * t + phase + np.pi))
    palm_down = axis_angle_matrix((1, 0, 0), -1.3)
    left_pos = _BASE_LEFT + np.stack([np.zeros(n), 0.05 - dip_l, np.zeros(n)], axis=1)
    right_pos = _BASE_RIGHT + np.stack([np.zeros(n), 0.05 - dip_r, np.zeros(n)], axis=1)
    curl_l = np.tile(np.array([0.3, 0.35, 0.35, 0.4, 0.4]), (n, 1)).copy()
    curl_r = curl_l.copy()
    curl_l[:, 1] += 0.3 * dip_l / amp
    curl_r[:, 1] += 0.3 * dip_r / amp
    speed = _speed_word(freq, 1.0, 2.4)
    return {
        "left": (np.tile(palm_down, (n, 1, 1)), left_pos, curl_l),
        "right": (np.tile(palm_down, (n, 1, 1)), right_pos, curl_r),
        "high": "A person presses keys on a keyboard, alternating both hands.",
        "fine": f"the hands press the keys {speed}, left and right fingers tapping in turn",
    }


def _gen_wipe(rng, n):
    t = np.arange(n) / FPS
    freq = rng.uniform(0.4, 1.0)
    amp = rng.uniform(0.1, 0.2)
    phase = rng.uniform(0, 2 * np.pi)
    noun = ["table", "window", "counter"][rng.integers(0, 3)]
    sweep = amp * np.sin(2 * np.pi * freq * t + phase)
    palm_down = axis_angle_matrix((1, 0, 0), -1.4)
    right_pos = _BASE_RIGHT + np.stack([sweep, np.zeros(n), 0.02 * np.cos(2 * np.pi * freq * t)], axis=1)
    left_pos = np.tile(_BASE_LEFT, (n, 1))
    curl_r = np.full((n, 5), 0.15)
    curl_l = np.full((n, 5), 0.4)
    speed, size = _speed_word(freq, 0.4, 1.0), _size_word(amp, 0.1, 0.2)
    return {
        "left": (_static_rot(n), left_pos, curl_l),
        "right": (np.tile(palm_down, (n, 1, 1)), right_pos, curl_r),
        "high": f"A person wipes a {noun} with broad strokes of the right hand.",
        "fine": f"the right hand wipes the {noun} with {size} {speed} strokes, palm pressed flat",
    }


def _gen_knit(rng, n):
    t = np.arange(n) / FPS
    freq = rng.uniform(0.6, 1.2)
    amp = rng.uniform(0.02, 0.05)
    phase = rng.uniform(0, 2 * np.pi)
    lx = amp * np.cos(2 * np.pi * freq * t + phase)
    ly = amp * np.sin(2 * np.pi * freq * t + phase)
    left_pos = _BASE_LEFT + np.stack([lx, 0.04 + ly, np.zeros(n)], axis=1)
    right_pos = _BASE_RIGHT + np.stack([-lx, 0.04 - ly, np.zeros(n)], axis=1)
    curl = np.full((n, 5), 0.6) + 0.08 * np.sin(2 * np.pi * freq * t + phase)[:, None]
    speed = _speed_word(freq, 0.6, 1.2)
    return {
        "left": (_static_rot(n), left_pos, curl),
        "right": (_static_rot(n), right_pos, curl),
        "high": "A person knits with both hands, looping yarn around the needles.",
        "fine": f"both hands knit {speed}, looping the yarn in small circles stitch after stitch",
    }


def _gen_clap(rng, n):
    t = np.arange(n) / FPS
    freq = rng.uniform(0.8, 1.8)
    amp = rng.uniform(0.06, 0.13)
    phase = rng.uniform(0, 2 * np.pi)
    gap = 0.03 + amp * 0.5 * (1 - np.cos(2 * np.pi * freq * t + phase))
    left_pos = np.stack([-gap, np.full(n, 0.08), np.zeros(n)], axis=1)
    right_pos = np.stack([gap, np.full(n, 0.08), np.zeros(n)], axis=1)
    rot_l = _static_rot(n, (0, 1, 0), 0.7)
    rot_r = _static_rot(n, (0, 1, 0), -0.7)
    curl = np.full((n, 5), 0.05)
    speed, size = _speed_word(freq, 0.8, 1.8), _size_word(amp, 0.06, 0.13)
    return {
        "left": (rot_l, left_pos, curl),
        "right": (rot_r, right_pos, curl),
        "high": "A person claps both hands together repeatedly.",
        "fine": f"the palms clap together {speed}, meeting at the center with {size} swings",
    }


_GENERATORS = {
    "wave": _gen_wave,
    "circle": _gen_circle,
    "grasp": _gen_grasp,
    "pour": _gen_pour,
    "press": _gen_press,
    "wipe": _gen_wipe,
    "knit": _gen_knit,
    "clap": _gen_clap,
}


def _build_motion(recipe) -> MotionSequence:
    rot_l, pos_l, curl_l = recipe["left"]
    rot_r, pos_r, curl_r = recipe["right"]
    # fix the world frame: first-frame wrist midpoint at the origin
    midpoint = (pos_l[0] + pos_r[0]) / 2.0
    pos_l = pos_l - midpoint
    pos_r = pos_r - midpoint
    left = HandTrack(
        trajectory=_traj(rot_l, pos_l), pose=_pose_from_curl(np.clip(curl_l, 0, 1))
    )
    right = HandTrack(
        trajectory=_traj(rot_r, pos_r), pose=_pose_from_curl(np.clip(curl_r, 0, 1))
    )
    return MotionSequence(left=left, right=right, fps=FPS)


def generate_record(family: str, rng: np.random.Generator, index: int) -> SequenceRecord:
    n = int(rng.integers(48, 73))
    recipe = _GENERATORS[family](rng, n)
    motion = _build_motion(recipe)
    return SequenceRecord(
        id=f"{family}-{index:05d}",
        motion=motion,
        caption_high=recipe["high"],
        caption_fine=recipe["fine"],
        visibility=np.ones((n, 2), dtype=bool),
    )


def generate_corpus(num: int, seed: int) -> list[SequenceRecord]:
    """Deterministically generate ``num`` records, cycling family assignment."""
    if num < 1:
        raise ValidationError("num must be >= 1")
    rng = np.random.default_rng(seed)
    records = []
    for i in range(num):
        family = FAMILIES[i % len(FAMILIES)]
        records.append(generate_record(family, rng, i))
    return records
