"""Procedural motion corpus.

Four parametric families (gait, turn, jump, wave) animate a 22-joint
body with randomized amplitude, frequency, phase, and heading, each
paired with a template caption. The 2D projections drive training; the
3D originals are written to separate `.3d.json` files that only the
evaluation side may open.
"""

from __future__ import annotations

import json
import pathlib

import numpy as np

from ..geom import Camera, project, yaw_matrix
from ..motion import Skeleton, default_skeleton, save_motion_json

__all__ = ["FAMILIES", "generate_sequence", "generate_corpus",
           "write_corpus", "read_corpus_2d", "read_corpus_3d",
           "read_captions"]

FAMILIES = ("gait", "turn", "jump", "wave")

# rest offsets (x right-to-left, y up, z forward), child relative to parent
_REST_OFFSETS = {
    "pelvis": (0.0, 0.95, 0.0),
    "left_hip": (0.10, -0.05, 0.0),
    "right_hip": (-0.10, -0.05, 0.0),
    "spine1": (0.0, 0.12, 0.0),
    "left_knee": (0.0, -0.40, 0.0),
    "right_knee": (0.0, -0.40, 0.0),
    "spine2": (0.0, 0.14, 0.0),
    "left_ankle": (0.0, -0.42, 0.0),
    "right_ankle": (0.0, -0.42, 0.0),
    "spine3": (0.0, 0.14, 0.0),
    "left_foot": (0.0, -0.06, 0.14),
    "right_foot": (0.0, -0.06, 0.14),
    "neck": (0.0, 0.10, 0.0),
    "left_clavicle": (0.08, 0.06, 0.0),
    "right_clavicle": (-0.08, 0.06, 0.0),
    "head": (0.0, 0.16, 0.0),
    "left_shoulder": (0.12, 0.0, 0.0),
    "right_shoulder": (-0.12, 0.0, 0.0),
    "left_elbow": (0.0, -0.26, 0.0),
    "right_elbow": (0.0, -0.26, 0.0),
    "left_wrist": (0.0, -0.24, 0.0),
    "right_wrist": (0.0, -0.24, 0.0),
}

_SPEED_WORDS = ("slowly", "steadily", "quickly")
_TEMPLATES = {
    "gait": "a person walks forward {mod}",
    "turn": "a person walks while turning {mod}",
    "jump": "a person jumps up and down {mod}",
    "wave": "a person stands and waves one arm {mod}",
}


def _rest_pose(skeleton: Skeleton) -> np.ndarray:
    """Local-frame rest joints (J, 3); pelvis at its standing height."""
    joints = np.zeros((skeleton.n_joints, 3))
    for j, name in enumerate(skeleton.joint_names):
        off = np.array(_REST_OFFSETS[name])
        p = skeleton.parent[j]
        joints[j] = off if p == -1 else joints[p] + off
    return joints


def _chain(skeleton: Skeleton, *names) -> list:
    idx = {n: i for i, n in enumerate(skeleton.joint_names)}
    return [idx[n] for n in names]


def generate_sequence(family: str, rng: np.random.Generator,
                      frames: int = 32, fps: float = 20.0,
                      skeleton: Skeleton | None = None):
    """One animated sequence. Returns (joints (T, J, 3), caption)."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    sk = skeleton if skeleton is not None else default_skeleton()
    rest = _rest_pose(sk)
    t = np.arange(frames) / fps

    amp = rng.uniform(0.16, 0.22)
    freq = rng.uniform(0.8, 1.6)
    phase = rng.uniform(0.0, 2 * np.pi)
    heading0 = rng.uniform(0.0, 2 * np.pi)
    speed_idx = rng.integers(0, 3)
    speed = (0.5, 0.9, 1.4)[speed_idx] * rng.uniform(0.85, 1.15)
    turn_dir = 1.0 if rng.random() < 0.5 else -1.0
    turn_rate = rng.uniform(0.4, 1.0) * turn_dir

    omega = 2 * np.pi * freq
    lleg = _chain(sk, "left_knee", "left_ankle", "left_foot")
    rleg = _chain(sk, "right_knee", "right_ankle", "right_foot")
    larm = _chain(sk, "left_elbow", "left_wrist")
    rarm = _chain(sk, "right_elbow", "right_wrist")
    lw = _chain(sk, "left_wrist")[0]

    if family == "turn":
        heading = heading0 + turn_rate * t
        mod = "left" if turn_dir > 0 else "right"
    else:
        # every motion carries a slow heading drift: bodies are never
        # perfectly still, and the drift disambiguates the viewing angle
        drift = rng.uniform(0.1, 0.3) * (1.0 if rng.random() < 0.5 else -1.0)
        heading = heading0 + drift * t
        mod = _SPEED_WORDS[speed_idx]

    walk = family in ("gait", "turn")
    move = speed if walk else 0.0

    # root path: integrate the per-frame heading direction
    fwd = np.stack([np.sin(heading), np.zeros(frames), np.cos(heading)], axis=1)
    step = move / fps
    path = np.concatenate([np.zeros((1, 3)), np.cumsum(fwd[:-1] * step, axis=0)])

    joints = np.empty((frames, sk.n_joints, 3))
    for i in range(frames):
        pose = rest.copy()
        s = np.sin(omega * t[i] + phase)
        if walk:
            pose[lleg, 2] += 1.5 * amp * s
            pose[rleg, 2] -= 1.5 * amp * s
            pose[larm, 2] -= 1.35 * amp * s
            pose[rarm, 2] += 1.35 * amp * s
            pose[:, 1] += 0.02 * amp * np.sin(2 * omega * t[i] + phase)
        elif family == "jump":
            pose[:, 1] += amp * max(0.0, s)
            pose[larm + rarm, 1] += 0.8 * amp * max(0.0, s)
            # arms swing forward on the way up, knees fold forward in the
            # crouch: the sagittal motion that makes the jump readable in
            # depth as well as height
            pose[larm + rarm, 2] += 1.5 * amp * max(0.0, s)
            pose[lleg + rleg, 2] += 1.2 * amp * max(0.0, -s)
        else:  # wave
            pose[lw, 0] += 0.6 * amp * s
            pose[lw, 1] += 0.5 * amp * (1 + s) / 2 + 0.2
            # the waving forearm reaches forward and the torso sways
            # gently fore-aft, so the pose has sagittal structure too
            pose[lw, 2] += 1.2 * amp * (1 + s) / 2
            pose[:, 2] += 0.5 * amp * np.sin(0.5 * omega * t[i] + phase)
        R = yaw_matrix(float(heading[i]))
        joints[i] = pose @ R.T + path[i]

    caption = _TEMPLATES[family].format(mod=mod)
    return joints, caption


def generate_corpus(n: int, seed: int, frames: int = 32, fps: float = 20.0):
    """n sequences cycling through the families; returns a list of
    (joints3d, caption) in deterministic order."""
    if n < 8:
        raise ValueError(f"corpus needs at least 8 sequences, got {n}")
    rng = np.random.default_rng([seed, 0xC0])
    out = []
    for i in range(n):
        fam = FAMILIES[i % len(FAMILIES)]
        out.append(generate_sequence(fam, rng, frames=frames, fps=fps))
    return out


def write_corpus(corpus, out_dir, fps: float = 20.0,
                 camera: Camera = Camera()):
    """Write seq_####.2d.json / seq_####.3d.json pairs plus captions.json."""
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sk = default_skeleton()
    captions = {}
    for i, (joints, caption) in enumerate(corpus):
        tag = f"seq_{i:04d}"
        save_motion_json(out_dir / f"{tag}.3d.json", joints, sk, fps)
        save_motion_json(out_dir / f"{tag}.2d.json", project(joints, camera),
                         sk, fps)
        captions[tag] = caption
    with open(out_dir / "captions.json", "w", encoding="utf-8") as fh:
        json.dump(captions, fh, indent=1, sort_keys=True)


def _read_suffix(data_dir, suffix: str):
    from ..motion import load_motion_json
    data_dir = pathlib.Path(data_dir)
    paths = sorted(data_dir.glob(f"seq_*{suffix}"))
    if not paths:
        raise FileNotFoundError(f"no {suffix} files in {data_dir}")
    return [load_motion_json(p) for p in paths]


def read_corpus_2d(data_dir):
    """Training-side reader: only ever touches the 2D projections."""
    return _read_suffix(data_dir, ".2d.json")


def read_corpus_3d(data_dir):
    """Evaluation-side reader for the hidden ground truth."""
    return _read_suffix(data_dir, ".3d.json")


def read_captions(data_dir) -> dict:
    with open(pathlib.Path(data_dir) / "captions.json", encoding="utf-8") as fh:
        return json.load(fh)
