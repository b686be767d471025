"""Command-line entry point.

Subcommands cover the whole artifact lifecycle: corpus generation, the
four training stages, lifting, prompt-driven generation, metric reports,
the quality-multimodality helper, and the gradient self-check.
"""

from __future__ import annotations

import argparse
import json
import os
import pathlib
import sys

import numpy as np

from .config import Config, load_config, paper_profile, worker_count

__all__ = ["main", "build_parser"]


def _load_cfg(args) -> Config:
    cfg = paper_profile() if getattr(args, "profile", "desk") == "paper" else Config()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            from .config import parse_config
            cfg = parse_config(fh.read(), base=cfg)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _add_common(p):
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", required=True, help="output path")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="motionlift")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic corpus")
    _add_common(p)
    p.add_argument("--n", type=int, default=None, help="sequence count")

    for name, extra in (("train-prior", []),
                        ("train-mlrq", ["--prior"]),
                        ("train-masked", ["--mlrq"]),
                        ("train-residual", ["--mlrq", "--masked"])):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} stage")
        _add_common(p)
        p.add_argument("--data", required=True, help="corpus directory")
        p.add_argument("--log", default=None, help="CSV loss log path")
        for flag in extra:
            p.add_argument(flag, required=True, help=f"{flag[2:]} checkpoint")

    p = sub.add_parser("lift", help="lift a 2D motion file to 3D")
    _add_common(p)
    p.add_argument("--mlrq", required=True)
    p.add_argument("--input", required=True, help="2D motion JSON file")

    p = sub.add_parser("generate", help="generate 3D motion from text")
    _add_common(p)
    p.add_argument("--mlrq", required=True)
    p.add_argument("--masked", required=True)
    p.add_argument("--residual", default=None)
    p.add_argument("--prompt", required=True)

    p = sub.add_parser("eval", help="metric report for a trained pipeline")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--mlrq", required=True)
    p.add_argument("--masked", default=None)
    p.add_argument("--residual", default=None)
    p.add_argument("--logs", nargs="*", default=[],
                   help="CSV loss logs to plot")

    p = sub.add_parser("qm", help="quality-multimodality score from two numbers")
    p.add_argument("fid", type=float)
    p.add_argument("mmodality", type=float)

    p = sub.add_parser("gradcheck", help="finite-difference self-check")
    p.add_argument("--seeds", type=int, default=5)

    return ap


def _cmd_gen_data(args):
    from .synthetic import generate_corpus, write_corpus
    cfg = _load_cfg(args)
    n = args.n if args.n is not None else cfg.n_sequences
    corpus = generate_corpus(n, cfg.seed, cfg.frames, cfg.fps)
    write_corpus(corpus, args.out, cfg.fps)
    print(f"wrote {n} sequences to {args.out}")
    return 0


def _cmd_train(args):
    from . import pipeline as pl
    cfg = _load_cfg(args)
    if args.cmd == "train-prior":
        pl.train_prior(cfg, args.data, args.out, args.log)
    elif args.cmd == "train-mlrq":
        pl.train_mlrq(cfg, args.data, args.prior, args.out, args.log)
    elif args.cmd == "train-masked":
        pl.train_masked(cfg, args.data, args.mlrq, args.out, args.log)
    else:
        pl.train_residual(cfg, args.data, args.mlrq, args.masked,
                          args.out, args.log)
    print(f"saved checkpoint {args.out}")
    return 0


def _cmd_lift(args):
    from . import pipeline as pl
    cfg = _load_cfg(args)
    info = pl.lift_file(cfg, args.mlrq, args.input, args.out)
    print(json.dumps(info))
    return 0


def _cmd_generate(args):
    from . import pipeline as pl
    from ..motion import default_skeleton, save_motion_json
    cfg = _load_cfg(args)
    joints, meta = pl.generate_motion(cfg, args.mlrq, args.masked,
                                      args.residual, args.prompt, cfg.seed)
    save_motion_json(args.out, joints, default_skeleton(), cfg.fps)
    sidecar = pathlib.Path(args.out).with_suffix(".meta.json")
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    print(f"wrote {args.out} (+ {sidecar.name})")
    return 0


def _cmd_eval(args):
    from .report import run_eval
    cfg = _load_cfg(args)
    paths = run_eval(cfg, args.data, args.mlrq, args.masked, args.residual,
                     args.out, args.logs)
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_qm(args):
    from ..evalkit import qm_score
    val = qm_score(args.fid, args.mmodality)
    print("inf" if val == float("inf") else f"{val:.3f}")
    return 0


def _cmd_gradcheck(args):
    from ..ndgrad import run_op_gradchecks
    worst = run_op_gradchecks(args.seeds)
    bad = {k: v for k, v in worst.items() if v >= 1e-4}
    for name in sorted(worst):
        print(f"{name}: {worst[name]:.2e}")
    if bad:
        print(f"FAILED: {sorted(bad)}")
        return 1
    print("all ops pass (< 1e-4)")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    workers = worker_count()
    os.environ.setdefault("OMP_NUM_THREADS", str(workers))
    os.environ.setdefault("OPENBLAS_NUM_THREADS", str(workers))
    handlers = {
        "gen-data": _cmd_gen_data,
        "train-prior": _cmd_train,
        "train-mlrq": _cmd_train,
        "train-masked": _cmd_train,
        "train-residual": _cmd_train,
        "lift": _cmd_lift,
        "generate": _cmd_generate,
        "eval": _cmd_eval,
        "qm": _cmd_qm,
        "gradcheck": _cmd_gradcheck,
    }
    return handlers[args.cmd](args)


if __name__ == "__main__":
    sys.exit(main())
