"""The four 2D-supervised regularizers and their weighted combination.

All quantities live in the autodiff graph; ground truth enters as constant
tensors. MSE terms are means over every element except the trajectory
term, which is the per-frame mean of the squared Euclidean offset (so a
one-unit offset in each coordinate costs the coordinate count).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad as ng
from .geom import Camera, sample_rotation
from .motion import Skeleton

__all__ = [
    "LossWeights",
    "LossReport",
    "split_features",
    "project_limbs",
    "loss_2d",
    "loss_rec",
    "loss_ori",
    "loss_feat",
    "loss_total",
]

DEGENERATE_CROSS_TOL = 1e-8


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0   # rotated-projection prior reconstruction
    lambda2: float = 1.0   # orientation hinge
    lambda3: float = 1.0   # latent feature consistency
    beta: float = 2.0      # quantizer commitment

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class LossReport:
    l2d: float
    lrec: float
    lori: float
    lfeat: float
    lcommit: float
    total: float
    degenerate_frames: int = 0

    def check_linearity(self, w: LossWeights, tol: float = 1e-10):
        expect = (self.l2d + w.lambda1 * self.lrec + w.lambda2 * self.lori
                  + w.lambda3 * self.lfeat + w.beta * self.lcommit)
        if abs(expect - self.total) > tol * max(1.0, abs(expect)):
            raise AssertionError(f"loss report out of balance: {self.total} vs {expect}")

    def as_csv_row(self, step: int) -> str:
        return (f"{step},{self.l2d:.10g},{self.lrec:.10g},{self.lori:.10g},"
                f"{self.lfeat:.10g},{self.lcommit:.10g},{self.total:.10g}")


def split_features(feats: ng.Tensor, dim: int):
    """(B, T, d*(K+1)) -> trajectory (B, T, d) and limbs (B, T, K, d)."""
    B, T, D = feats.data.shape
    if D % dim:
        raise ValueError(f"feature width {D} not divisible by dim {dim}")
    K = D // dim - 1
    tau = ng.narrow(feats, 2, 0, dim)
    limbs = ng.reshape(ng.narrow(feats, 2, dim, K * dim), (B, T, K, dim))
    return tau, limbs


def project_limbs(limbs: ng.Tensor, camera: Camera, rotation: np.ndarray | None = None) -> ng.Tensor:
    """Weak-perspective projection of (B, T, K, 3) limb vectors, optionally
    after a global rotation; output (B, T, K, 2)."""
    B, T, K, d = limbs.data.shape
    if d != 3:
        raise ValueError(f"expected 3D limbs, got last axis {d}")
    flat = ng.reshape(limbs, (B * T * K, 3))
    if rotation is not None:
        flat = ng.matmul(flat, ng.tensor(np.asarray(rotation).T))
    xy = ng.narrow(flat, 1, 0, 2)
    if camera.scale != 1.0:
        xy = ng.smul(xy, camera.scale)
    return ng.reshape(xy, (B, T, K, 2))


def loss_2d(limbs3d_hat: ng.Tensor, tau_hat: ng.Tensor, limbs2d: np.ndarray,
            tau2d: np.ndarray, camera: Camera) -> ng.Tensor:
    """Projection-matching loss: limb term is a plain elementwise MSE, the
    trajectory term is the frame-mean squared Euclidean offset."""
    proj = project_limbs(limbs3d_hat, camera)
    limb_term = ng.mse(proj, ng.tensor(limbs2d))
    B, T, d3 = tau_hat.data.shape
    tflat = ng.reshape(tau_hat, (B * T, d3))
    txy = ng.narrow(tflat, 1, 0, 2)
    if camera.scale != 1.0:
        txy = ng.smul(txy, camera.scale)
    d = tau2d.shape[-1]
    traj_term = ng.smul(ng.mse(txy, ng.tensor(tau2d.reshape(B * T, d))), float(d))
    return ng.add(limb_term, traj_term)


def loss_rec(limbs3d_hat: ng.Tensor, prior, camera: Camera,
             rng: np.random.Generator, n_rot: int = 4,
             rotation_mode: str = "yaw", forced_rotations=None) -> ng.Tensor:
    """Frozen-prior reconstruction error of randomly rotated projections,
    averaged over `n_rot` rotation samples."""
    if not prior.frozen:
        raise RuntimeError("2D prior must be frozen before regularizing with it")
    B, T, K, _ = limbs3d_hat.data.shape
    if forced_rotations is not None:
        rotations = list(forced_rotations)
    else:
        rotations = [sample_rotation(rng, rotation_mode) for _ in range(n_rot)]
    # one batched prior pass over all rotations: the MSE of the stacked
    # projections equals the mean of the per-rotation MSEs exactly
    views = [ng.reshape(project_limbs(limbs3d_hat, camera, rotation=R),
                        (B, T, K * 2))
             for R in rotations]
    return prior.score(ng.concat(views, axis=0))


def _limb_slices(skeleton: Skeleton):
    return {
        "rhip": skeleton.limb_of_child(skeleton.role("right_hip")),
        "lhip": skeleton.limb_of_child(skeleton.role("left_hip")),
        "lfoot": skeleton.limb_of_child(skeleton.role("left_foot")),
        "rfoot": skeleton.limb_of_child(skeleton.role("right_foot")),
    }


def foot_direction(limbs: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Unit forward direction of the feet: negated mean of the two
    ankle-to-foot limb vectors (limb sign is parent minus child)."""
    s = _limb_slices(skeleton)
    v = -(limbs[..., s["lfoot"], :] + limbs[..., s["rfoot"], :]) / 2.0
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, 1e-12)


def loss_ori(limbs3d_hat: ng.Tensor, skeleton: Skeleton):
    """Hinge penalty on the projection of the foot direction onto the body
    orientation, averaged over non-degenerate frames.

    Returns (loss tensor, degenerate frame count)."""
    s = _limb_slices(skeleton)
    B, T, K, _ = limbs3d_hat.data.shape
    rhip = ng.reshape(ng.narrow(limbs3d_hat, 2, s["rhip"], 1), (B, T, 3))
    lhip = ng.reshape(ng.narrow(limbs3d_hat, 2, s["lhip"], 1), (B, T, 3))
    lfoot = ng.reshape(ng.narrow(limbs3d_hat, 2, s["lfoot"], 1), (B, T, 3))
    rfoot = ng.reshape(ng.narrow(limbs3d_hat, 2, s["rfoot"], 1), (B, T, 3))

    cross = ng.cross3(rhip, lhip)
    cross_norm = np.linalg.norm(cross.data, axis=-1)
    mask = (cross_norm >= DEGENERATE_CROSS_TOL).astype(np.float64)
    n_degenerate = int(mask.size - mask.sum())

    v_ori = ng.unit_last(cross)
    v_foot = ng.unit_last(ng.smul(ng.add(lfoot, rfoot), -0.5))
    hinge = ng.relu(ng.neg(ng.dot_last(v_foot, v_ori)))  # (B, T)
    masked = ng.mul(hinge, ng.tensor(mask))
    n_live = mask.sum()
    if n_live == 0:
        return ng.smul(ng.sum_all(masked), 0.0), n_degenerate
    return ng.smul(ng.sum_all(masked), 1.0 / n_live), n_degenerate


def loss_feat(feats2d_hat: ng.Tensor, feats2d: np.ndarray, encoder) -> ng.Tensor:
    """Latent MSE between encodings of the re-projected motion and the real
    2D motion; the real branch is a stop-gradient target."""
    B = feats2d_hat.data.shape[0]
    both = encoder(ng.concat([feats2d_hat, ng.tensor(feats2d)], axis=0))
    z_hat = ng.narrow(both, 0, 0, B)
    z_real = ng.stop_grad(ng.narrow(both, 0, B, B))
    return ng.mse(z_hat, z_real)


def loss_total(l2d: ng.Tensor, lrec, lori, lfeat, lcommit,
               weights: LossWeights, degenerate_frames: int = 0):
    """Assemble the training objective; components may be None (ablated),
    which contributes exactly zero. Returns (total tensor, LossReport)."""
    total = l2d
    vals = {"l2d": float(l2d.data), "lrec": 0.0, "lori": 0.0,
            "lfeat": 0.0, "lcommit": 0.0}
    for name, term, w in (("lrec", lrec, weights.lambda1),
                          ("lori", lori, weights.lambda2),
                          ("lfeat", lfeat, weights.lambda3),
                          ("lcommit", lcommit, weights.beta)):
        if term is None:
            continue
        vals[name] = float(term.data)
        if w != 0.0:
            total = ng.add(total, ng.smul(term, w))
    report = LossReport(
        l2d=vals["l2d"],
        lrec=vals["lrec"] if lrec is not None else 0.0,
        lori=vals["lori"] if lori is not None else 0.0,
        lfeat=vals["lfeat"] if lfeat is not None else 0.0,
        lcommit=vals["lcommit"] if lcommit is not None else 0.0,
        total=float(total.data),
        degenerate_frames=degenerate_frames,
    )
    return total, report
