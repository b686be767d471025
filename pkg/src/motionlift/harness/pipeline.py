"""Training-stage orchestration.

Stages run in a fixed order -- 2D prior, lifting model (pretrain then
finetune), masked transformer, residual transformer -- each consuming
the previous stage's checkpoint and emitting its own plus a CSV loss
log. Every random draw comes from a generator derived from
(seed, stage, step), so any stage can resume mid-run bit-exactly.
"""

from __future__ import annotations

import csv
import pathlib

import numpy as np

from .. import ndgrad as ng
from ..evalkit import FeatureExtractor, fid, mpjpe, train_feature_extractor
from ..geom import Camera
from ..losses import (LossWeights, loss_2d, loss_feat, loss_ori, loss_rec,
                      loss_total)
from ..motion import (MotionSeq, decompose, default_skeleton, flatten,
                      joints_to_limbs, limbs_to_joints, save_motion_json,
                      unflatten)
from ..nets import ConvEncoder, MLRQ, Prior2D
from ..rvq import codebook_update
from ..textgen import (HashTextEmbedder, MaskedTransformer,
                       ResidualTransformer, generate_tokens,
                       train_masked_step, train_residual_step)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config
from .synthetic import read_captions, read_corpus_2d

__all__ = [
    "StageOrderError",
    "Dataset2D",
    "load_training_data",
    "train_prior",
    "train_mlrq",
    "train_masked",
    "train_residual",
    "lift_features",
    "lift_file",
    "generate_motion",
    "fid_proxy",
    "metric_extractor",
    "lift_corpus",
]

_STAGE_IDS = {"prior": 1, "mlrq": 2, "masked": 3, "residual": 4,
              "generate": 5, "eval": 6, "extractor": 7}


class StageOrderError(RuntimeError):
    """A stage was invoked before its prerequisite checkpoint exists."""


def _require(path, stage: str, needed_by: str):
    if not pathlib.Path(path).exists():
        raise StageOrderError(
            f"{needed_by} requires the {stage} checkpoint at {path}; "
            f"run the {stage} stage first")


def _stage_rng(seed: int, stage: str, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, _STAGE_IDS[stage], step])


# ---------------------------------------------------------------------------
# data plumbing


class Dataset2D:
    """In-memory 2D training set in both representations.

    feats: (N, T, 44) model inputs/targets -- trajectory channels first,
    then limb vectors (limb mode) or root-relative joints (joint mode).
    limbs/tau keep the geometric views the losses need.
    """

    def __init__(self, feats, limbs, tau, captions, skeleton):
        self.feats = feats
        self.limbs = limbs
        self.tau = tau
        self.captions = captions
        self.skeleton = skeleton

    def __len__(self):
        return self.feats.shape[0]

    def batch(self, rng, size: int):
        idx = rng.choice(len(self), size=min(size, len(self)), replace=False)
        return idx, self.feats[idx], self.limbs[idx], self.tau[idx]


def _joint_features(joints: np.ndarray, skeleton) -> np.ndarray:
    """(T, J, d) -> (T, d + (J-1)*d): root trajectory, then root-relative
    positions of the non-root joints."""
    T, J, d = joints.shape
    root = joints[:, skeleton.root, :]
    rel = np.delete(joints - root[:, None, :], skeleton.root, axis=1)
    return np.concatenate([root, rel.reshape(T, (J - 1) * d)], axis=1)


def load_training_data(data_dir, cfg: Config) -> Dataset2D:
    """Read the 2D projections (never the 3D files) into training arrays."""
    records = read_corpus_2d(data_dir)
    captions = read_captions(data_dir)
    skeleton = records[0][1]
    feats, limbs, tau = [], [], []
    for joints, sk, fps in records:
        motion = decompose(joints, sk, fps)
        if cfg.representation == "limb":
            feats.append(flatten(motion))
        else:
            feats.append(_joint_features(joints, sk))
        limbs.append(motion.limbs)
        tau.append(motion.tau)
    caps = [captions[f"seq_{i:04d}"] for i in range(len(records))]
    return Dataset2D(np.stack(feats), np.stack(limbs), np.stack(tau),
                     caps, skeleton)


def normalization_stats(feats: np.ndarray, camera_scale: float):
    """Channel statistics for standardizing model inputs and outputs.

    feats (N, T, 2*(K+1)) are 2D features grouped as (x, y) per entity
    (trajectory first). The 3D output affine reuses the 2D statistics per
    entity divided by the camera scale; depth channels get zero shift and
    the mean of the x/y spreads (no 3D data is consulted)."""
    flat = feats.reshape(-1, feats.shape[-1])
    in_mean = flat.mean(axis=0)
    in_std = np.maximum(flat.std(axis=0), 1e-3)
    n_ent = feats.shape[-1] // 2
    out_scale = np.empty(n_ent * 3)
    out_shift = np.zeros(n_ent * 3)
    for e in range(n_ent):
        sx, sy = in_std[2 * e], in_std[2 * e + 1]
        out_shift[3 * e] = in_mean[2 * e] / camera_scale
        out_shift[3 * e + 1] = in_mean[2 * e + 1] / camera_scale
        out_scale[3 * e] = sx / camera_scale
        out_scale[3 * e + 1] = sy / camera_scale
        out_scale[3 * e + 2] = 0.5 * (sx + sy) / camera_scale
    return in_mean, in_std, out_scale, out_shift


def _rel_to_limb_matrix(skeleton, d: int) -> np.ndarray:
    """Constant map from root-relative joint coordinates (non-root joints,
    (J-1)*d) to limb vectors (K*d): limb_k = rel[parent] - rel[child]."""
    J = skeleton.n_joints
    r = skeleton.root
    cols = [j for j in range(J) if j != r]
    col_of = {j: i for i, j in enumerate(cols)}
    K = J - 1
    M = np.zeros((K * d, K * d))
    for k, (p, c) in enumerate(skeleton.limbs):
        for a in range(d):
            if p != r:
                M[col_of[p] * d + a, k * d + a] += 1.0
            M[col_of[c] * d + a, k * d + a] -= 1.0
    return M


def _split_output(out: ng.Tensor, skeleton, rel2limb: np.ndarray | None):
    """Model output (B, T, 66) -> (tau_hat (B,T,3), limbs (B,T,K,3))."""
    B, T, D = out.data.shape
    K = skeleton.n_limbs
    tau_hat = ng.narrow(out, 2, 0, 3)
    rest = ng.narrow(out, 2, 3, D - 3)
    if rel2limb is not None:  # joint representation
        flat = ng.reshape(rest, (B * T, K * 3))
        rest = ng.reshape(ng.matmul(flat, ng.tensor(rel2limb)), (B, T, K * 3))
    limbs = ng.reshape(rest, (B, T, K, 3))
    return tau_hat, limbs


def _project_output(out: ng.Tensor, scale: float) -> ng.Tensor:
    """Drop the depth channel of every 3-vector group and scale: the
    2D-feature rendering of a 3D feature block (B, T, 22*3) -> (B, T, 22*2)."""
    B, T, D = out.data.shape
    g = ng.reshape(out, (B, T, D // 3, 3))
    xy = ng.narrow(g, 3, 0, 2)
    if scale != 1.0:
        xy = ng.smul(xy, scale)
    return ng.reshape(xy, (B, T, (D // 3) * 2))


# ---------------------------------------------------------------------------
# stage: 2D prior


def build_prior(cfg: Config, rng) -> Prior2D:
    dim = (default_skeleton().n_limbs) * 2
    return Prior2D(dim, cfg.prior_width, cfg.prior_code_dim,
                   cfg.prior_codebook_size, rng, kind=cfg.prior_kind,
                   n_down=cfg.prior_n_down)


def train_prior(cfg: Config, data_dir, out_path, log_path=None):
    data = load_training_data(data_dir, cfg.replace(representation="limb"))
    limb_feats = data.limbs.reshape(len(data), -1, data.skeleton.n_limbs * 2)
    prior = build_prior(cfg, _stage_rng(cfg.seed, "prior", 0))
    prior.ensure_codebooks(limb_feats[:cfg.batch_size],
                           _stage_rng(cfg.seed, "prior", 0))
    opt = ng.Adam(prior.param_list(), lr=cfg.lr_pretrain)
    rows = []
    for step in range(cfg.steps_prior):
        rng = _stage_rng(cfg.seed, "prior", step + 1)
        idx = rng.choice(len(data), size=min(cfg.batch_size, len(data)),
                         replace=False)
        x = ng.tensor(limb_feats[idx])
        recon, aux = prior.reconstruct(x, rng)
        loss = ng.mse(recon, x)
        if "commit" in aux:
            loss = ng.add(loss, ng.smul(aux["commit"], cfg.beta))
        if "kl" in aux:
            loss = ng.add(loss, ng.smul(aux["kl"], 1e-3))
        for p in prior.param_list():
            p.zero_grad()
        loss.backward()
        opt.step()
        if "commit" in aux:
            codebook_update(prior.stack, aux["residual_inputs"],
                            aux["tokens"], rng)
        rows.append((step, float(loss.data)))
    state = {f"prior.{k}": v for k, v in prior.state().items()}
    save_checkpoint(out_path, state, cfg.to_text())
    if log_path:
        _write_csv(log_path, ["step", "loss"], rows)
    return prior


def load_prior(cfg: Config, ckpt_path) -> Prior2D:
    arrays, _ = load_checkpoint(ckpt_path)
    prior = build_prior(cfg, _stage_rng(cfg.seed, "prior", 0))
    prior.load_state({k[len("prior."):]: v for k, v in arrays.items()
                      if k.startswith("prior.")})
    prior.freeze()
    return prior


# ---------------------------------------------------------------------------
# stage: lifting model


def build_mlrq(cfg: Config, rng) -> MLRQ:
    sk = default_skeleton()
    in_dim = 2 + sk.n_limbs * 2
    out_dim = 3 + sk.n_limbs * 3
    return MLRQ(in_dim, out_dim, cfg.width, cfg.code_dim,
                cfg.n_levels, cfg.codebook_size, rng, n_down=cfg.n_down)


def _mlrq_arrays(model: MLRQ, opt: ng.Adam, names) -> dict:
    arrays = {f"mlrq.{k}": v for k, v in model.state().items()}
    arrays["adam.t"] = np.array(float(opt.t))
    for name, m, v in zip(names, opt.m, opt.v):
        arrays[f"adam.m.{name}"] = m
        arrays[f"adam.v.{name}"] = v
    return arrays


def train_mlrq(cfg: Config, data_dir, prior_ckpt, out_path, log_path=None,
               resume_from=None, stop_after=None):
    """Pretrain + finetune the lifting model against the frozen 2D prior.

    `stop_after` truncates the run after that many total steps (used for
    mid-stage checkpoint/resume); `resume_from` continues from such a
    truncated checkpoint, reproducing the uninterrupted run bit-exactly.
    """
    _require(prior_ckpt, "prior", "train-mlrq")
    prior = load_prior(cfg, prior_ckpt)
    data = load_training_data(data_dir, cfg)
    skeleton = data.skeleton
    camera = Camera(cfg.camera_scale)
    weights = LossWeights(cfg.lambda1, cfg.lambda2, cfg.lambda3, cfg.beta)
    rel2limb = (None if cfg.representation == "limb"
                else _rel_to_limb_matrix(skeleton, 3))

    model = build_mlrq(cfg, _stage_rng(cfg.seed, "mlrq", 0))
    model.set_normalization(*normalization_stats(data.feats, cfg.camera_scale))
    model.ensure_codebooks(data.feats[:cfg.batch_size],
                           _stage_rng(cfg.seed, "mlrq", 0))
    param_names = ([f"encoder.{k}" for k in model.encoder.params()]
                   + [f"decoder.{k}" for k in model.decoder.params()])

    total_steps = cfg.steps_mlrq_pretrain + cfg.steps_mlrq_finetune
    start = 0
    opt = ng.Adam(model.param_list(), lr=cfg.lr_pretrain)
    if resume_from is not None:
        arrays, _ = load_checkpoint(resume_from)
        model.load_state({k[len("mlrq."):]: v for k, v in arrays.items()
                          if k.startswith("mlrq.")})
        opt.t = int(arrays["adam.t"].item())
        for i, name in enumerate(param_names):
            opt.m[i] = arrays[f"adam.m.{name}"].reshape(opt.m[i].shape)
            opt.v[i] = arrays[f"adam.v.{name}"].reshape(opt.v[i].shape)
        start = int(arrays["step"].item())

    if cfg.share_encoder:
        def shared_encoder(t):
            return model.encoder(model._normalize_in(t))
    else:
        # ablation: feature-consistency runs through an independent frozen
        # randomly initialized encoder instead of the lifting encoder
        sep = ConvEncoder(data.feats.shape[-1], cfg.width, cfg.code_dim,
                          _stage_rng(cfg.seed, "mlrq", 0))
        sep.set_trainable(False)

        def shared_encoder(t):
            return sep(model._normalize_in(t))

    rows = []
    end = total_steps if stop_after is None else min(stop_after, total_steps)
    for step in range(start, end):
        opt.lr = (cfg.lr_pretrain if step < cfg.steps_mlrq_pretrain
                  else cfg.lr_finetune)
        rng = _stage_rng(cfg.seed, "mlrq", step + 1)
        idx, feats, limbs2d, tau2d = data.batch(rng, cfg.batch_size)
        x = ng.tensor(feats)
        out, tokens, commit, residual_inputs, _ = model.forward(x)
        tau_hat, limbs3d_hat = _split_output(out, skeleton, rel2limb)

        l2d = loss_2d(limbs3d_hat, tau_hat, limbs2d, tau2d, camera)
        lrec = None if cfg.disable_rec else loss_rec(
            limbs3d_hat, prior, camera, rng, cfg.n_rot, cfg.rotation_mode)
        lori, ndeg = (None, 0)
        if not cfg.disable_ori:
            lori, ndeg = loss_ori(limbs3d_hat, skeleton)
        lfeat = None
        if not cfg.disable_feat:
            feats2d_hat = _project_output(out, cfg.camera_scale)
            lfeat = loss_feat(feats2d_hat, feats, shared_encoder)
        total, report = loss_total(l2d, lrec, lori, lfeat, commit,
                                   weights, ndeg)
        for p in model.param_list():
            p.zero_grad()
        total.backward()
        opt.step()
        codebook_update(model.stack, residual_inputs, tokens.reshape(-1, cfg.n_levels), rng)
        rows.append(report.as_csv_row(step))

    arrays = _mlrq_arrays(model, opt, param_names)
    arrays["step"] = np.array(float(end))
    save_checkpoint(out_path, arrays, cfg.to_text())
    if log_path:
        _write_csv(log_path,
                   ["step", "l2d", "lrec", "lori", "lfeat", "lcommit", "total"],
                   rows, raw=True)
    return model, rows


def load_mlrq(cfg: Config, ckpt_path) -> MLRQ:
    arrays, _ = load_checkpoint(ckpt_path)
    model = build_mlrq(cfg, _stage_rng(cfg.seed, "mlrq", 0))
    model.load_state({k[len("mlrq."):]: v for k, v in arrays.items()
                      if k.startswith("mlrq.")})
    return model


# ---------------------------------------------------------------------------
# stage: transformers


def _tokenize_corpus(model: MLRQ, data: Dataset2D) -> np.ndarray:
    _, tokens, _, _, _ = model.forward(ng.tensor(data.feats))
    return tokens


def train_masked(cfg: Config, data_dir, mlrq_ckpt, out_path, log_path=None):
    _require(mlrq_ckpt, "mlrq", "train-masked")
    model = load_mlrq(cfg, mlrq_ckpt)
    data = load_training_data(data_dir, cfg)
    tokens = _tokenize_corpus(model, data)
    embedder = HashTextEmbedder(cfg.text_width)
    embs = embedder.embed_batch(data.captions)
    seq_len = tokens.shape[1]
    net = MaskedTransformer(cfg.codebook_size, seq_len, cfg.text_width,
                            cfg.masked_width, cfg.masked_heads,
                            cfg.masked_blocks,
                            _stage_rng(cfg.seed, "masked", 0))
    opt = ng.Adam(net.param_list(), lr=cfg.lr_pretrain)
    rows = []
    for step in range(cfg.steps_masked):
        rng = _stage_rng(cfg.seed, "masked", step + 1)
        idx = rng.choice(len(data), size=min(cfg.batch_size, len(data)),
                         replace=False)
        loss, _ = train_masked_step(net, tokens[idx, :, 0], embs[idx], rng,
                                    cfg.cond_dropout)
        for p in net.param_list():
            p.zero_grad()
        loss.backward()
        opt.step()
        rows.append((step, float(loss.data)))
    save_checkpoint(out_path,
                    {f"masked.{k}": v for k, v in net.state().items()},
                    cfg.to_text())
    if log_path:
        _write_csv(log_path, ["step", "loss"], rows)
    return net, rows


def train_residual(cfg: Config, data_dir, mlrq_ckpt, masked_ckpt, out_path,
                   log_path=None):
    _require(mlrq_ckpt, "mlrq", "train-residual")
    _require(masked_ckpt, "masked", "train-residual")
    model = load_mlrq(cfg, mlrq_ckpt)
    data = load_training_data(data_dir, cfg)
    tokens = _tokenize_corpus(model, data)
    embedder = HashTextEmbedder(cfg.text_width)
    embs = embedder.embed_batch(data.captions)
    seq_len = tokens.shape[1]
    net = ResidualTransformer(cfg.codebook_size, cfg.n_levels, seq_len,
                              cfg.text_width, cfg.masked_width,
                              cfg.masked_heads, cfg.masked_blocks,
                              _stage_rng(cfg.seed, "residual", 0))
    opt = ng.Adam(net.param_list(), lr=cfg.lr_pretrain)
    rows = []
    for step in range(cfg.steps_residual):
        rng = _stage_rng(cfg.seed, "residual", step + 1)
        idx = rng.choice(len(data), size=min(cfg.batch_size, len(data)),
                         replace=False)
        loss, level = train_residual_step(net, tokens[idx], embs[idx], rng,
                                          cfg.cond_dropout)
        for p in net.param_list():
            p.zero_grad()
        loss.backward()
        opt.step()
        rows.append((step, float(loss.data), level))
    save_checkpoint(out_path,
                    {f"residual.{k}": v for k, v in net.state().items()},
                    cfg.to_text())
    if log_path:
        _write_csv(log_path, ["step", "loss", "level"], rows)
    return net, rows


def load_masked(cfg: Config, ckpt_path, seq_len: int) -> MaskedTransformer:
    arrays, _ = load_checkpoint(ckpt_path)
    net = MaskedTransformer(cfg.codebook_size, seq_len, cfg.text_width,
                            cfg.masked_width, cfg.masked_heads,
                            cfg.masked_blocks,
                            _stage_rng(cfg.seed, "masked", 0))
    net.load_state({k[len("masked."):]: v for k, v in arrays.items()})
    return net


def load_residual(cfg: Config, ckpt_path, seq_len: int) -> ResidualTransformer:
    arrays, _ = load_checkpoint(ckpt_path)
    net = ResidualTransformer(cfg.codebook_size, cfg.n_levels, seq_len,
                              cfg.text_width, cfg.masked_width,
                              cfg.masked_heads, cfg.masked_blocks,
                              _stage_rng(cfg.seed, "residual", 0))
    net.load_state({k[len("residual."):]: v for k, v in arrays.items()})
    return net


# ---------------------------------------------------------------------------
# inference


def _features_to_motion(cfg: Config, feats: np.ndarray, skeleton) -> MotionSeq:
    """(T, 66) model output -> 3D MotionSeq in the configured representation."""
    if cfg.representation == "limb":
        return unflatten(feats, 3, cfg.fps)
    tau = feats[:, :3]
    rel = feats[:, 3:].reshape(feats.shape[0], skeleton.n_joints - 1, 3)
    joints = np.insert(rel, skeleton.root, 0.0, axis=1) + tau[:, None, :]
    m = decompose(joints, skeleton, cfg.fps)
    return MotionSeq(tau=tau, limbs=m.limbs, fps=cfg.fps)


def lift_features(cfg: Config, model: MLRQ, feats2d: np.ndarray):
    """(T, 44) 2D features -> (MotionSeq3D, reprojection error report)."""
    out, _, _, _, _ = model.forward(ng.tensor(feats2d[None]))
    motion = _features_to_motion(cfg, out.data[0], default_skeleton())
    proj = _project_output(out, cfg.camera_scale).data[0]
    limb2d = feats2d[:, 2:]
    err = np.linalg.norm((proj[:, 2:] - limb2d).reshape(-1, 2), axis=-1).mean()
    mean_len = np.linalg.norm(limb2d.reshape(-1, 2)[
        np.linalg.norm(limb2d.reshape(-1, 2), axis=-1) > 0], axis=-1).mean()
    return motion, {"reprojection_error": float(err),
                    "mean_limb_length": float(mean_len)}


def lift_file(cfg: Config, mlrq_ckpt, in_path, out_path):
    _require(mlrq_ckpt, "mlrq", "lift")
    model = load_mlrq(cfg, mlrq_ckpt)
    from ..motion import load_motion_json
    joints2d, skeleton, fps = load_motion_json(in_path)
    if joints2d.shape[-1] != 2:
        raise ValueError("lift expects a 2D motion file")
    motion2d = decompose(joints2d, skeleton, fps)
    feats = (flatten(motion2d) if cfg.representation == "limb"
             else _joint_features(joints2d, skeleton))
    motion, info = lift_features(cfg, model, feats)
    joints3d = limbs_to_joints(motion.limbs, motion.tau, skeleton)
    save_motion_json(out_path, joints3d, skeleton, fps)
    return info


def generate_motion(cfg: Config, mlrq_ckpt, masked_ckpt, residual_ckpt,
                    prompt: str, seed: int):
    """Text prompt -> (joints3d (T, J, 3), metadata dict)."""
    _require(mlrq_ckpt, "mlrq", "generate")
    _require(masked_ckpt, "masked", "generate")
    model = load_mlrq(cfg, mlrq_ckpt)
    seq_len = cfg.frames // model.factor
    masked = load_masked(cfg, masked_ckpt, seq_len)
    residual = None
    if cfg.n_levels > 1:
        _require(residual_ckpt, "residual", "generate")
        residual = load_residual(cfg, residual_ckpt, seq_len)
    embedder = HashTextEmbedder(cfg.text_width)
    rng = np.random.default_rng([seed, _STAGE_IDS["generate"]])
    grid = generate_tokens(masked, residual, embedder.embed(prompt), seq_len,
                           cfg.n_levels, rng, cfg.gen_steps, cfg.cfg_scale)
    feats = model.decode_grid(grid[None])[0]
    skeleton = default_skeleton()
    motion = _features_to_motion(cfg, feats, skeleton)
    joints3d = limbs_to_joints(motion.limbs, motion.tau, skeleton)
    meta = {"prompt": prompt, "seed": seed, "frames": int(joints3d.shape[0]),
            "tokens_per_frame_group": int(cfg.n_levels)}
    return joints3d, meta


# ---------------------------------------------------------------------------
# evaluation support


def metric_extractor(cfg: Config, real_motions, captions) -> FeatureExtractor:
    """Contrastively train the evaluation feature extractor on the real 3D
    corpus. Seeded from dedicated rng streams so every metric run sees the
    same extractor."""
    ext = FeatureExtractor(motion_dim=real_motions[0].shape[-1],
                           text_dim=cfg.text_width, width=cfg.fx_width,
                           rng=_stage_rng(cfg.seed, "extractor", 0))
    embedder = HashTextEmbedder(cfg.text_width)
    stats = np.stack([FeatureExtractor.motion_stats(m) for m in real_motions])
    embs = embedder.embed_batch(captions)
    train_feature_extractor(ext, stats, embs, steps=cfg.fx_steps,
                            batch=cfg.batch_size,
                            rng=_stage_rng(cfg.seed, "extractor", 1))
    return ext


def lift_corpus(cfg: Config, model: MLRQ, data: Dataset2D):
    """Lift every corpus sequence; returns a list of flattened 3D motions."""
    out, _, _, _, _ = model.forward(ng.tensor(data.feats))
    return [flatten(_features_to_motion(cfg, f, data.skeleton))
            for f in out.data]


def fid_proxy(cfg: Config, model: MLRQ, data_dir) -> float:
    """Distribution distance between lifted 3D motions and the hidden 3D
    ground truth, using a deterministic feature extractor. Evaluation-side
    only: reads the .3d.json files."""
    from .synthetic import read_corpus_3d
    data = load_training_data(data_dir, cfg)
    lifted = lift_corpus(cfg, model, data)
    real = [flatten(decompose(j, sk, fps))
            for j, sk, fps in read_corpus_3d(data_dir)]
    ext = metric_extractor(cfg, real, data.captions)
    return fid(ext.motion_features(real), ext.motion_features(lifted)).value


def _write_csv(path, header, rows, raw: bool = False):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            if raw and isinstance(r, str):
                fh.write(r + "\n")
            else:
                w.writerow(r)
