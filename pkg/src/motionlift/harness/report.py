"""Metric reports: a table-formatted text file, a machine-readable CSV,
and static plots (loss curves plus a quality/diversity scatter).

Everything here is deterministic under a fixed config seed: feature
extraction, pool shuffling, and generation all draw from dedicated
(seed, stage, step) rng streams, and figures are written without
timestamps so repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import math
import pathlib

import numpy as np

from .. import ndgrad as ng
from ..evalkit import (diversity, fid, mm_dist, mmodality, mpjpe, qm_score,
                       r_precision)
from ..motion import decompose, flatten
from ..textgen import HashTextEmbedder, generate_tokens
from . import pipeline as pl
from .config import Config
from .synthetic import read_corpus_3d

__all__ = ["run_eval"]


def _lift_metrics(cfg: Config, model, data, real_motions):
    out, _, _, _, _ = model.forward(ng.tensor(data.feats))
    proj = pl._project_output(out, cfg.camera_scale).data
    motions = [pl._features_to_motion(cfg, f, data.skeleton)
               for f in out.data]
    ratios, errs = [], []
    for i in range(len(data)):
        limb2d = data.feats[i][:, 2:].reshape(-1, 2)
        err = np.linalg.norm(proj[i][:, 2:].reshape(-1, 2) - limb2d,
                             axis=-1).mean()
        lens = np.linalg.norm(limb2d, axis=-1)
        ratios.append(err / lens[lens > 0].mean())
        errs.append(mpjpe(motions[i], real_motions[i], data.skeleton))
    return motions, float(np.mean(ratios)), float(np.mean(errs))


def _generate_groups(cfg: Config, model, masked, residual, captions):
    """Up to cfg.eval_prompts unique captions, cfg.eval_repeats motions
    each. Returns (prompts, groups of flattened 3D motions)."""
    prompts = []
    for c in captions:
        if c not in prompts:
            prompts.append(c)
        if len(prompts) == cfg.eval_prompts:
            break
    embedder = HashTextEmbedder(cfg.text_width)
    seq_len = cfg.frames // model.factor
    groups = []
    for pi, prompt in enumerate(prompts):
        e_text = embedder.embed(prompt)
        group = []
        for r in range(cfg.eval_repeats):
            rng = pl._stage_rng(cfg.seed, "eval", pi * cfg.eval_repeats + r)
            grid = generate_tokens(masked, residual, e_text, seq_len,
                                   cfg.n_levels, rng, cfg.gen_steps,
                                   cfg.cfg_scale)
            feats = model.decode_grid(grid[None])[0]
            group.append(flatten(pl._features_to_motion(
                cfg, feats, pl.default_skeleton())))
        groups.append(group)
    return prompts, groups


def _gen_metrics(cfg: Config, ext, real_flat, prompts, groups):
    embedder = HashTextEmbedder(cfg.text_width)
    all_flat = [m for g in groups for m in g]
    gen_feats = ext.motion_features(all_flat)
    fid_gen = fid(ext.motion_features(real_flat), gen_feats)

    # One motion per prompt against the prompt pool, so every pool entry
    # has a distinct caption.
    first_feats = ext.motion_features([g[0] for g in groups])
    text_feats = ext.text_features(embedder.embed_batch(prompts))
    pool = min(cfg.rp_pool, len(prompts))
    rp = {k: r_precision(first_feats, text_feats, k, pool_size=pool,
                         rng=pl._stage_rng(cfg.seed, "eval", 1000 + k))
          for k in (1, 2, 3) if k <= pool}
    mmd = mm_dist(first_feats, text_feats)
    div = diversity(gen_feats, min(cfg.div_pairs, len(gen_feats) // 2),
                    rng=pl._stage_rng(cfg.seed, "eval", 2000))
    mmod = mmodality([ext.motion_features(g) for g in groups])
    out = {"fid_gen": fid_gen.value,
           "fid_gen_regularized": float(fid_gen.regularized)}
    for k, v in rp.items():
        out[f"r_precision_top{k}"] = v
    out.update({
        "mm_dist": mmd,
        "diversity": div,
        "mmodality": mmod,
        "qm_score": qm_score(fid_gen.value, mmod),
    })
    return out


def _plot_losses(log_paths, out_png):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for path in log_paths:
        path = pathlib.Path(path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            continue
        col = "total" if "total" in rows[0] else list(rows[0])[-1]
        ax.plot([float(r["step"]) for r in rows],
                [float(r[col]) for r in rows], label=path.stem)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, metadata={"Date": None})
    plt.close(fig)


def _plot_qm(fid_value, mmod_value, out_png):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    xs = np.linspace(max(fid_value * 0.2, 1e-4), fid_value * 3 + 1e-3, 100)
    for q in (1.0, 2.0, 4.0):
        ax.plot(xs, q * q * xs, lw=0.8, color="0.7")
        ax.annotate(f"QM={q:g}", (xs[-1], q * q * xs[-1]), fontsize=7,
                    color="0.4")
    ax.scatter([fid_value], [mmod_value], color="tab:red", zorder=3)
    ax.set_xlabel("FID (proxy extractor)")
    ax.set_ylabel("MModality")
    fig.tight_layout()
    fig.savefig(out_png, metadata={"Date": None})
    plt.close(fig)


def _fmt(value):
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6f}"
    return str(value)


def run_eval(cfg: Config, data_dir, mlrq_ckpt, masked_ckpt, residual_ckpt,
             out_dir, log_paths=()):
    """Evaluate a trained pipeline; returns the list of files written."""
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pl._require(mlrq_ckpt, "mlrq", "eval")
    model = pl.load_mlrq(cfg, mlrq_ckpt)
    data = pl.load_training_data(data_dir, cfg)
    real_motions = [decompose(j, sk, fps)
                    for j, sk, fps in read_corpus_3d(data_dir)]
    real_flat = [flatten(m) for m in real_motions]

    motions, reproj, err3d = _lift_metrics(cfg, model, data, real_motions)
    ext = pl.metric_extractor(cfg, real_flat, data.captions)
    fid_lift = fid(ext.motion_features(real_flat),
                   ext.motion_features([flatten(m) for m in motions]))
    metrics = {
        "reprojection_ratio": reproj,
        "mpjpe_lift": err3d,
        "fid_lift": fid_lift.value,
        "fid_lift_regularized": float(fid_lift.regularized),
    }

    if masked_ckpt is not None:
        pl._require(masked_ckpt, "masked", "eval")
        seq_len = cfg.frames // model.factor
        masked = pl.load_masked(cfg, masked_ckpt, seq_len)
        residual = None
        if cfg.n_levels > 1:
            pl._require(residual_ckpt, "residual", "eval")
            residual = pl.load_residual(cfg, residual_ckpt, seq_len)
        prompts, groups = _generate_groups(cfg, model, masked, residual,
                                           data.captions)
        metrics.update(_gen_metrics(cfg, ext, real_flat, prompts, groups))

    written = []
    txt = out / "report.txt"
    width = max(len(k) for k in metrics)
    with open(txt, "w", encoding="utf-8") as fh:
        fh.write("metric".ljust(width) + "  value\n")
        fh.write("-" * (width + 12) + "\n")
        for k, v in metrics.items():
            fh.write(k.ljust(width) + "  " + _fmt(v) + "\n")
    written.append(txt)

    csv_path = out / "report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for k, v in metrics.items():
            w.writerow([k, _fmt(v)])
    written.append(csv_path)

    if log_paths:
        png = out / "losses.png"
        _plot_losses(log_paths, png)
        written.append(png)
    if "qm_score" in metrics and math.isfinite(metrics["qm_score"]):
        png = out / "qm_scatter.png"
        _plot_qm(metrics["fid_gen"], metrics["mmodality"], png)
        written.append(png)
    return [str(p) for p in written]
