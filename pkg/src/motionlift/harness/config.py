"""Run configuration: a flat `key = value` text format with typed
defaults. Unknown keys are rejected so typos fail loudly."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, asdict

__all__ = ["Config", "load_config", "parse_config", "save_config",
           "paper_profile", "worker_count"]


@dataclass
class Config:
    # run identity / data
    seed: int = 0
    n_sequences: int = 256
    frames: int = 32
    fps: float = 20.0

    # model sizes
    width: int = 48
    code_dim: int = 64
    n_levels: int = 4
    codebook_size: int = 64
    n_down: int = 2
    prior_width: int = 32
    prior_code_dim: int = 32
    prior_codebook_size: int = 64
    prior_n_down: int = 2

    # objective weights
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    beta: float = 2.0

    # optimization
    batch_size: int = 32
    lr_pretrain: float = 0.0002
    lr_finetune: float = 0.00002
    steps_prior: int = 300
    steps_mlrq_pretrain: int = 400
    steps_mlrq_finetune: int = 60
    steps_masked: int = 200
    steps_residual: int = 120

    # geometry / regularizers
    camera_scale: float = 1.0
    rotation_mode: str = "yaw"
    n_rot: int = 4

    # ablation & variant switches
    disable_rec: bool = False
    disable_ori: bool = False
    disable_feat: bool = False
    prior_kind: str = "vqvae"
    share_encoder: bool = True
    representation: str = "limb"

    # generation
    text_width: int = 64
    masked_width: int = 64
    masked_heads: int = 4
    masked_blocks: int = 2
    gen_steps: int = 10
    cfg_scale: float = 4.0
    cond_dropout: float = 0.1

    # evaluation
    fx_width: int = 32
    fx_steps: int = 300
    rp_pool: int = 32
    div_pairs: int = 16
    eval_prompts: int = 8
    eval_repeats: int = 2

    def __post_init__(self):
        if self.rotation_mode not in ("yaw", "so3"):
            raise ValueError(f"unknown rotation_mode {self.rotation_mode!r}")
        if self.prior_kind not in ("vqvae", "vae", "ae"):
            raise ValueError(f"unknown prior_kind {self.prior_kind!r}")
        if self.representation not in ("limb", "joint"):
            raise ValueError(f"unknown representation {self.representation!r}")

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def replace(self, **kw) -> "Config":
        d = asdict(self)
        d.update(kw)
        return Config(**d)


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {name!r}: cannot parse bool from {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse `key = value` lines; `#` starts a comment; blank lines skipped."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    if base is not None:
        return base.replace(**values)
    return Config(**values)


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def save_config(cfg: Config, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())


def paper_profile() -> Config:
    """Full-scale profile: batch 256, wide models, long step budgets.
    Included for completeness; the desk defaults are what fit one core."""
    return Config(
        batch_size=256,
        width=512,
        code_dim=512,
        n_levels=6,
        codebook_size=512,
        n_sequences=4096,
        frames=64,
        steps_prior=50_000,
        steps_mlrq_pretrain=300_000,
        steps_mlrq_finetune=100_000,
        steps_masked=300_000,
        steps_residual=300_000,
        masked_width=384,
        masked_heads=6,
        masked_blocks=6,
        fx_steps=20_000,
    )


def worker_count(default: int = 1) -> int:
    """Worker cap from the F3D_THREADS environment variable (min 1)."""
    raw = os.environ.get("F3D_THREADS", "")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"F3D_THREADS must be an integer, got {raw!r}")
