"""Evaluation metrics for generated and lifted motion.

Distribution realism (Fréchet distance on Gaussian feature fits),
text-motion alignment (R-Precision, MMDist), diversity measures
(Diversity across prompts, MModality within a prompt), the combined
quality-multimodality score, and 3D joint error (MPJPE). Features come
from a small contrastive motion/text encoder pair trained once per
corpus and content-hash pinned.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import ndgrad as ng
from .motion import MotionSeq, Skeleton, compose
from .nets import Module

__all__ = [
    "GaussianMoments",
    "FidResult",
    "fid",
    "r_precision",
    "mm_dist",
    "diversity",
    "mmodality",
    "qm_score",
    "mpjpe",
    "FeatureExtractor",
    "train_feature_extractor",
]


# ---------------------------------------------------------------------------
# distribution distance


@dataclass(frozen=True)
class GaussianMoments:
    """Sufficient statistics of a feature set for the Fréchet distance."""

    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def fit(cls, feats: np.ndarray) -> "GaussianMoments":
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise ValueError("need a (n, d) feature set with n >= 2")
        mu = feats.mean(axis=0)
        cov = np.cov(feats, rowvar=False)
        cov = np.atleast_2d(cov)
        return cls(mean=mu, cov=0.5 * (cov + cov.T))


@dataclass(frozen=True)
class FidResult:
    value: float
    regularized: bool

    def __float__(self) -> float:
        return self.value


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; negative
    eigenvalues (numerical noise) are clipped at zero."""
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def fid(real_feats: np.ndarray, gen_feats: np.ndarray) -> FidResult:
    """Fréchet distance between Gaussian fits of two feature sets:
    ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2})."""
    a = GaussianMoments.fit(real_feats)
    b = GaussianMoments.fit(gen_feats)
    if a.mean.shape != b.mean.shape:
        raise ValueError("feature widths differ")
    cov_a, cov_b = a.cov, b.cov
    regularized = False
    eps = 1e-6
    if (np.linalg.eigvalsh(cov_a).min() < 1e-10
            or np.linalg.eigvalsh(cov_b).min() < 1e-10):
        cov_a = cov_a + eps * np.eye(cov_a.shape[0])
        cov_b = cov_b + eps * np.eye(cov_b.shape[0])
        regularized = True
    rt_a = _psd_sqrt(cov_a)
    cross = _psd_sqrt(rt_a @ cov_b @ rt_a)
    diff = a.mean - b.mean
    val = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b)
                - 2.0 * np.trace(cross))
    return FidResult(value=max(val, 0.0), regularized=regularized)


# ---------------------------------------------------------------------------
# text-motion alignment


def r_precision(motion_feats: np.ndarray, text_feats: np.ndarray, k: int,
                pool_size: int = 32, rng=None) -> float:
    """Retrieval precision: within pools of `pool_size` paired samples,
    the fraction of motions whose own text ranks in the top-k by
    Euclidean distance."""
    m = np.asarray(motion_feats, dtype=np.float64)
    t = np.asarray(text_feats, dtype=np.float64)
    if m.shape != t.shape:
        raise ValueError("motion/text feature sets must be paired")
    n = m.shape[0]
    if pool_size > n:
        raise ValueError(f"pool size {pool_size} exceeds set size {n}")
    if not 1 <= k <= pool_size:
        raise ValueError(f"k must be in [1, {pool_size}]")
    order = np.arange(n) if rng is None else rng.permutation(n)
    hits = 0
    total = 0
    for start in range(0, n - pool_size + 1, pool_size):
        idx = order[start:start + pool_size]
        pm, pt = m[idx], t[idx]
        d = np.linalg.norm(pm[:, None, :] - pt[None, :, :], axis=-1)
        own = d[np.arange(pool_size), np.arange(pool_size)]
        rank = 1 + (d < own[:, None]).sum(axis=1)
        hits += int((rank <= k).sum())
        total += pool_size
    return hits / total


def mm_dist(motion_feats: np.ndarray, text_feats: np.ndarray) -> float:
    """Mean Euclidean distance between paired motion and text features."""
    m = np.asarray(motion_feats, dtype=np.float64)
    t = np.asarray(text_feats, dtype=np.float64)
    if m.shape != t.shape:
        raise ValueError("motion/text feature sets must be paired")
    return float(np.linalg.norm(m - t, axis=-1).mean())


# ---------------------------------------------------------------------------
# diversity measures


def diversity(feats: np.ndarray, n_pairs: int, rng=None) -> float:
    """Mean feature distance over `n_pairs` disjoint random index pairs."""
    f = np.asarray(feats, dtype=np.float64)
    if 2 * n_pairs > f.shape[0]:
        raise ValueError(
            f"need at least {2 * n_pairs} features for {n_pairs} disjoint pairs")
    rng = rng if rng is not None else np.random.default_rng(0)
    perm = rng.permutation(f.shape[0])
    a = f[perm[:n_pairs]]
    b = f[perm[n_pairs:2 * n_pairs]]
    return float(np.linalg.norm(a - b, axis=-1).mean())


def mmodality(groups) -> float:
    """Mean pairwise feature distance within each same-text group,
    averaged over groups. Groups with fewer than two members carry no
    pairwise signal and are skipped with a warning."""
    means = []
    skipped = 0
    for g in groups:
        g = np.asarray(g, dtype=np.float64)
        n = g.shape[0]
        if n < 2:
            skipped += 1
            continue
        d = np.linalg.norm(g[:, None, :] - g[None, :, :], axis=-1)
        iu = np.triu_indices(n, k=1)
        means.append(float(d[iu].mean()))
    if skipped:
        warnings.warn(f"excluded {skipped} group(s) of size 1 from mmodality")
    if not means:
        raise ValueError("no group has >= 2 generations")
    return float(np.mean(means))


def qm_score(fid_value: float, mmodality_value: float):
    """sqrt(MModality / FID); infinity marker when FID is exactly zero."""
    if fid_value < 0 or mmodality_value < 0:
        raise ValueError("fid and mmodality must be non-negative")
    if fid_value == 0:
        return math.inf
    return math.sqrt(mmodality_value / fid_value)


# ---------------------------------------------------------------------------
# 3D joint error


def mpjpe(pred: MotionSeq, gt: MotionSeq, skeleton: Skeleton) -> float:
    """Mean per-joint position error after per-frame root alignment."""
    if pred.n_frames != gt.n_frames:
        raise ValueError("frame count mismatch")
    jp = compose(pred, skeleton)
    jg = compose(gt, skeleton)
    r = skeleton.root
    jp = jp - jp[:, r:r + 1, :]
    jg = jg - jg[:, r:r + 1, :]
    return float(np.linalg.norm(jp - jg, axis=-1).mean())


# ---------------------------------------------------------------------------
# feature extraction


class FeatureExtractor(Module):
    """Contrastive motion/text encoder pair producing unit-norm features
    of a shared width. The motion branch consumes per-channel temporal
    mean and standard deviation of flattened motion features; the text
    branch consumes a fixed hashed bag-of-tokens embedding."""

    def __init__(self, motion_dim: int, text_dim: int, width: int = 32,
                 hidden: int = 64, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.motion_dim = motion_dim
        self.text_dim = text_dim
        self.width = width

        def lin(name, din, dout):
            w = self.add_param(name + ".w",
                               rng.normal(0, 1 / np.sqrt(din), size=(din, dout)))
            b = self.add_param(name + ".b", np.zeros(dout))
            return w, b

        self.m1 = lin("m1", 2 * motion_dim, hidden)
        self.m2 = lin("m2", hidden, width)
        self.t1 = lin("t1", text_dim, hidden)
        self.t2 = lin("t2", hidden, width)

    @staticmethod
    def motion_stats(feats: np.ndarray) -> np.ndarray:
        """(T, D) flattened motion -> (2D,) temporal mean/std summary."""
        feats = np.asarray(feats, dtype=np.float64)
        return np.concatenate([feats.mean(axis=0), feats.std(axis=0)])

    def _branch(self, x: ng.Tensor, l1, l2) -> ng.Tensor:
        h = ng.relu(ng.add_bias(ng.matmul(x, l1[0]), l1[1]))
        out = ng.add_bias(ng.matmul(h, l2[0]), l2[1])
        return ng.unit_last(out)

    def motion_forward(self, stats: ng.Tensor) -> ng.Tensor:
        return self._branch(stats, self.m1, self.m2)

    def text_forward(self, emb: ng.Tensor) -> ng.Tensor:
        return self._branch(emb, self.t1, self.t2)

    def motion_features(self, motions) -> np.ndarray:
        """Deterministic feature vectors for a list of (T, D) motions."""
        stats = np.stack([self.motion_stats(m) for m in motions])
        return self.motion_forward(ng.tensor(stats)).data

    def text_features(self, embeddings: np.ndarray) -> np.ndarray:
        return self.text_forward(ng.tensor(np.atleast_2d(embeddings))).data


def train_feature_extractor(extractor: FeatureExtractor,
                            motion_stats: np.ndarray,
                            text_embs: np.ndarray,
                            steps: int = 300, batch: int = 32,
                            lr: float = 1e-3, temperature: float = 0.07,
                            rng=None) -> list:
    """Symmetric InfoNCE over paired (motion, caption) examples. Returns
    the per-step loss history."""
    rng = rng if rng is not None else np.random.default_rng(0)
    n = motion_stats.shape[0]
    if text_embs.shape[0] != n:
        raise ValueError("paired sets required")
    opt = ng.Adam(extractor.param_list(), lr=lr)
    history = []
    for _ in range(steps):
        idx = rng.choice(n, size=min(batch, n), replace=False)
        fm = extractor.motion_forward(ng.tensor(motion_stats[idx]))
        ft = extractor.text_forward(ng.tensor(text_embs[idx]))
        sim = ng.smul(ng.matmul(fm, ng.transpose(ft, (1, 0))), 1.0 / temperature)
        targets = np.arange(len(idx))
        loss = ng.smul(
            ng.add(ng.cross_entropy(sim, targets),
                   ng.cross_entropy(ng.transpose(sim, (1, 0)), targets)),
            0.5)
        for p in extractor.param_list():
            p.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.data))
    return history
