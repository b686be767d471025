"""Skeleton topology and the trajectory + limb-vector motion representation.

A motion sequence is stored as a global root trajectory (T x d) plus
per-frame limb vectors (T x K x d), where limb n is the difference
parent(n) - child(n) of joint positions. Limb vectors are invariant to
global translation, which is what makes the decomposition useful.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Skeleton",
    "MotionSeq",
    "default_skeleton",
    "joints_to_limbs",
    "limbs_to_joints",
    "decompose",
    "compose",
    "flatten",
    "unflatten",
    "load_motion_json",
    "save_motion_json",
]


@dataclass(frozen=True)
class Skeleton:
    """Rooted joint tree. parent[i] is the index of joint i's parent; the
    root carries the sentinel -1. Limbs are ordered by child index."""

    joint_names: tuple
    parent: tuple
    roles: dict = field(default_factory=dict)  # name -> joint index

    def __post_init__(self):
        parent = tuple(int(p) for p in self.parent)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        roots = [i for i, p in enumerate(parent) if p == -1]
        if len(roots) != 1:
            raise ValueError(f"skeleton must have exactly one root, found {len(roots)}")
        # cycle check: every joint must reach the root
        for i in range(len(parent)):
            seen, j = set(), i
            while parent[j] != -1:
                if j in seen:
                    raise ValueError("skeleton parent array contains a cycle")
                seen.add(j)
                j = parent[j]
        for role, idx in self.roles.items():
            if not 0 <= idx < len(parent):
                raise ValueError(f"role {role!r} points at invalid joint {idx}")

    @property
    def n_joints(self) -> int:
        return len(self.parent)

    @property
    def n_limbs(self) -> int:
        return self.n_joints - 1

    @property
    def root(self) -> int:
        return self.parent.index(-1)

    @property
    def limbs(self):
        """(parent, child) pairs sorted by child index."""
        return [(p, c) for c, p in enumerate(self.parent) if p != -1]

    def role(self, name: str) -> int:
        if name not in self.roles:
            raise KeyError(f"skeleton has no role {name!r}")
        return self.roles[name]

    def limb_of_child(self, child: int) -> int:
        """Index into the limb axis for the limb ending at `child`."""
        children = [c for c, p in enumerate(self.parent) if p != -1]
        return children.index(child)


# 22-joint SMPL-style layout, pelvis-rooted, y up.
_DEFAULT_JOINTS = [
    ("pelvis", -1),
    ("left_hip", 0), ("right_hip", 0), ("spine1", 0),
    ("left_knee", 1), ("right_knee", 2), ("spine2", 3),
    ("left_ankle", 4), ("right_ankle", 5), ("spine3", 6),
    ("left_foot", 7), ("right_foot", 8), ("neck", 9),
    ("left_clavicle", 9), ("right_clavicle", 9), ("head", 12),
    ("left_shoulder", 13), ("right_shoulder", 14),
    ("left_elbow", 16), ("right_elbow", 17),
    ("left_wrist", 18), ("right_wrist", 19),
]


def default_skeleton() -> Skeleton:
    names = tuple(n for n, _ in _DEFAULT_JOINTS)
    parents = tuple(p for _, p in _DEFAULT_JOINTS)
    roles = {
        "root": 0,
        "left_hip": names.index("left_hip"),
        "right_hip": names.index("right_hip"),
        "left_ankle": names.index("left_ankle"),
        "right_ankle": names.index("right_ankle"),
        "left_foot": names.index("left_foot"),
        "right_foot": names.index("right_foot"),
    }
    return Skeleton(names, parents, roles)


@dataclass(frozen=True)
class MotionSeq:
    """T-frame sequence: root trajectory tau (T x d) + limbs (T x K x d)."""

    tau: np.ndarray
    limbs: np.ndarray
    fps: float

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=np.float64)
        limbs = np.asarray(self.limbs, dtype=np.float64)
        if tau.ndim != 2 or limbs.ndim != 3:
            raise ValueError(f"bad motion shapes tau{tau.shape} limbs{limbs.shape}")
        if tau.shape[0] != limbs.shape[0] or tau.shape[0] < 1:
            raise ValueError(f"frame counts disagree: {tau.shape[0]} vs {limbs.shape[0]}")
        if tau.shape[1] != limbs.shape[2] or tau.shape[1] not in (2, 3):
            raise ValueError(f"coordinate dims disagree: {tau.shape[1]} vs {limbs.shape[2]}")
        if not (np.isfinite(tau).all() and np.isfinite(limbs).all()):
            raise ValueError("motion contains non-finite values")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "limbs", limbs)

    @property
    def n_frames(self) -> int:
        return self.tau.shape[0]

    @property
    def dim(self) -> int:
        return self.tau.shape[1]


def joints_to_limbs(joints: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """limbs[t, n] = joints[t, parent(n)] - joints[t, child(n)]."""
    joints = np.asarray(joints, dtype=np.float64)
    if joints.ndim != 3 or joints.shape[1] != skeleton.n_joints:
        raise ValueError(
            f"expected (T,{skeleton.n_joints},d) joints, got {joints.shape}"
        )
    pairs = skeleton.limbs
    pa = np.array([p for p, _ in pairs])
    ch = np.array([c for _, c in pairs])
    return joints[:, pa] - joints[:, ch]


def limbs_to_joints(limbs: np.ndarray, root_pos: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Accumulate limb vectors down the tree: child = parent - limb."""
    limbs = np.asarray(limbs, dtype=np.float64)
    root_pos = np.asarray(root_pos, dtype=np.float64)
    K, d = skeleton.n_limbs, root_pos.shape[-1]
    if limbs.ndim != 3 or limbs.shape[1] != K or limbs.shape[2] != d:
        raise ValueError(f"expected (T,{K},{d}) limbs, got {limbs.shape}")
    T = limbs.shape[0]
    joints = np.zeros((T, skeleton.n_joints, d))
    joints[:, skeleton.root] = root_pos
    # children are ordered so a simple index-increasing pass is not enough;
    # walk until all joints are placed (tree depth passes)
    pairs = skeleton.limbs
    placed = {skeleton.root}
    remaining = list(range(len(pairs)))
    while remaining:
        progressed = []
        for n in remaining:
            p, c = pairs[n]
            if p in placed:
                joints[:, c] = joints[:, p] - limbs[:, n]
                placed.add(c)
                progressed.append(n)
        if not progressed:
            raise ValueError("skeleton traversal stalled; tree is disconnected")
        remaining = [n for n in remaining if n not in progressed]
    return joints


def decompose(joints: np.ndarray, skeleton: Skeleton, fps: float = 20.0) -> MotionSeq:
    """Split joint positions into root trajectory + limb vectors."""
    joints = np.asarray(joints, dtype=np.float64)
    return MotionSeq(
        tau=joints[:, skeleton.root].copy(),
        limbs=joints_to_limbs(joints, skeleton),
        fps=fps,
    )


def compose(motion: MotionSeq, skeleton: Skeleton) -> np.ndarray:
    """Inverse of decompose: rebuild (T, J, d) joint positions."""
    return limbs_to_joints(motion.limbs, motion.tau, skeleton)


def flatten(motion: MotionSeq) -> np.ndarray:
    """(T, d*(K+1)) feature matrix; trajectory channels first, then limbs
    flattened in limb order with coordinates innermost."""
    T, K, d = motion.limbs.shape
    return np.concatenate([motion.tau, motion.limbs.reshape(T, K * d)], axis=1)


def unflatten(features: np.ndarray, dim: int, fps: float = 20.0) -> MotionSeq:
    """Inverse of flatten; `dim` is the coordinate count (2 or 3)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] % dim != 0:
        raise ValueError(f"feature width {features.shape} not divisible by dim {dim}")
    T, D = features.shape
    K = D // dim - 1
    return MotionSeq(
        tau=features[:, :dim].copy(),
        limbs=features[:, dim:].reshape(T, K, dim),
        fps=fps,
    )


# ---------------------------------------------------------------------------
# Motion JSON interchange format

def save_motion_json(path, joints: np.ndarray, skeleton: Skeleton, fps: float):
    """Write {"fps", "skeleton": {"names", "parents"}, "frames"} JSON."""
    joints = np.asarray(joints, dtype=np.float64)
    doc = {
        "fps": fps,
        "skeleton": {
            "names": list(skeleton.joint_names),
            "parents": list(skeleton.parent),
        },
        "frames": joints.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_motion_json(path):
    """Read a Motion JSON file; returns (joints (T,J,d), skeleton, fps)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("fps", "skeleton", "frames"):
        if key not in doc:
            raise ValueError(f"motion file missing key {key!r}")
    sk = doc["skeleton"]
    names = tuple(sk["names"])
    parents = tuple(sk["parents"])
    roles = {}
    if names == default_skeleton().joint_names:
        roles = default_skeleton().roles
    skeleton = Skeleton(names, parents, roles)
    joints = np.asarray(doc["frames"], dtype=np.float64)
    if joints.ndim != 3 or joints.shape[1] != skeleton.n_joints:
        raise ValueError(f"frames shape {joints.shape} does not match skeleton")
    if joints.shape[2] not in (2, 3):
        raise ValueError(f"coordinates must be 2D or 3D, got {joints.shape[2]}")
    return joints, skeleton, float(doc["fps"])
