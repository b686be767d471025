"""Text-conditioned generation in the quantized latent space.

A masked transformer models base-level tokens (masked modeling with a
cosine schedule and iterative confidence-based decoding); a residual
transformer fills the remaining quantizer levels greedily. Conditioning
is a single prepended text token; classifier-free guidance extrapolates
between conditional and unconditional logits at inference.
"""

from __future__ import annotations

import hashlib
import math
import warnings

import numpy as np

from . import ndgrad as ng
from .nets import Module

__all__ = [
    "HashTextEmbedder",
    "TransformerBackbone",
    "MaskedTransformer",
    "ResidualTransformer",
    "cosine_mask_ratio",
    "train_masked_step",
    "train_residual_step",
    "generate_tokens",
]


class HashTextEmbedder:
    """Deterministic bag-of-tokens embedder: each token hashes to a fixed
    Gaussian vector, the sum is unit-normalized. A stand-in for a learned
    text encoder with the same interface (text -> fixed-width vector)."""

    def __init__(self, width: int = 64, salt: str = "motionlift-text-v1"):
        self.width = width
        self.salt = salt

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.sha256((self.salt + ":" + token).encode()).digest()
        seed = int.from_bytes(digest[:8], "little")
        return np.random.default_rng(seed).standard_normal(self.width)

    def embed(self, text: str) -> np.ndarray:
        tokens = [t for t in "".join(
            c if c.isalnum() else " " for c in text.lower()).split() if t]
        if not tokens:
            warnings.warn("empty text embeds to the zero vector (unconditional)")
            return np.zeros(self.width)
        v = np.zeros(self.width)
        for t in tokens:
            v += self._token_vector(t)
        return v / np.linalg.norm(v)

    def embed_batch(self, texts) -> np.ndarray:
        return np.stack([self.embed(t) for t in texts])


def cosine_mask_ratio(u: float) -> float:
    """Mask schedule gamma(u) = cos(pi u / 2): 1 at u=0, 0 at u=1."""
    return math.cos(math.pi * u / 2.0)


class _Linear:
    def __init__(self, owner: Module, name: str, din: int, dout: int, rng):
        self.w = owner.add_param(f"{name}.w",
                                 rng.normal(0.0, 1.0 / np.sqrt(din), size=(din, dout)))
        self.b = owner.add_param(f"{name}.b", np.zeros(dout))
        self.din, self.dout = din, dout

    def __call__(self, x: ng.Tensor) -> ng.Tensor:
        shape = x.data.shape
        flat = ng.reshape(x, (int(np.prod(shape[:-1])), shape[-1]))
        out = ng.add_bias(ng.matmul(flat, self.w), self.b)
        return ng.reshape(out, shape[:-1] + (self.dout,))


class _LayerNorm:
    def __init__(self, owner: Module, name: str, dim: int):
        self.g = owner.add_param(f"{name}.g", np.ones(dim))
        self.b = owner.add_param(f"{name}.b", np.zeros(dim))

    def __call__(self, x):
        return ng.layer_norm(x, self.g, self.b)


class _Attention:
    def __init__(self, owner: Module, name: str, width: int, heads: int, rng):
        if width % heads:
            raise ValueError(f"width {width} not divisible by heads {heads}")
        self.h = heads
        self.dh = width // heads
        self.qkv = _Linear(owner, f"{name}.qkv", width, 3 * width, rng)
        self.proj = _Linear(owner, f"{name}.proj", width, width, rng)

    def __call__(self, x: ng.Tensor) -> ng.Tensor:
        B, S, W = x.data.shape
        qkv = self.qkv(x)  # (B,S,3W)

        def heads_of(t):
            t = ng.reshape(t, (B, S, self.h, self.dh))
            t = ng.transpose(t, (0, 2, 1, 3))
            return ng.reshape(t, (B * self.h, S, self.dh))

        q = heads_of(ng.narrow(qkv, 2, 0, W))
        k = heads_of(ng.narrow(qkv, 2, W, W))
        v = heads_of(ng.narrow(qkv, 2, 2 * W, W))
        scores = ng.smul(ng.bmm(q, ng.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(self.dh))
        att = ng.softmax(scores)
        out = ng.bmm(att, v)  # (B*h, S, dh)
        out = ng.reshape(out, (B, self.h, S, self.dh))
        out = ng.reshape(ng.transpose(out, (0, 2, 1, 3)), (B, S, W))
        return self.proj(out)


class TransformerBackbone:
    """Pre-norm self-attention stack over (B, S, width) sequences.
    Parameters are registered in the owning Module under `name.*`."""

    def __init__(self, owner: Module, name: str, width: int, heads: int,
                 blocks: int, rng):
        self.width = width
        self.blocks = []
        for i in range(blocks):
            ln1 = _LayerNorm(owner, f"{name}.b{i}.ln1", width)
            att = _Attention(owner, f"{name}.b{i}.att", width, heads, rng)
            ln2 = _LayerNorm(owner, f"{name}.b{i}.ln2", width)
            fc1 = _Linear(owner, f"{name}.b{i}.fc1", width, 4 * width, rng)
            fc2 = _Linear(owner, f"{name}.b{i}.fc2", 4 * width, width, rng)
            self.blocks.append((ln1, att, ln2, fc1, fc2))
        self.ln_out = _LayerNorm(owner, f"{name}.ln_out", width)

    def __call__(self, x: ng.Tensor) -> ng.Tensor:
        for ln1, att, ln2, fc1, fc2 in self.blocks:
            x = ng.add(x, att(ln1(x)))
            x = ng.add(x, fc2(ng.gelu(fc1(ln2(x)))))
        return self.ln_out(x)


class MaskedTransformer(Module):
    """Base-level token model: predicts masked tokens given the visible
    ones and a text conditioning token. Vocabulary size M plus one
    learned mask token (id == M)."""

    def __init__(self, vocab: int, seq_len: int, text_width: int,
                 width: int = 128, heads: int = 4, blocks: int = 4, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.vocab = vocab
        self.seq_len = seq_len
        self.mask_id = vocab
        self.token_emb = self.add_param(
            "token_emb", rng.normal(0, 0.02, size=(vocab + 1, width)))
        self.pos_emb = self.add_param(
            "pos_emb", rng.normal(0, 0.02, size=(seq_len, width)))
        self.cond = _Linear(self, "cond", text_width, width, rng)
        self.backbone = TransformerBackbone(self, "bb", width, heads, blocks, rng)
        self.head = _Linear(self, "head", width, vocab, rng)

    def logits(self, tokens: np.ndarray, e_text: np.ndarray) -> ng.Tensor:
        """tokens (B, S) ints in [0, vocab] (mask id allowed); returns
        (B, S, vocab) unnormalized logits over real tokens."""
        B, S = tokens.shape
        emb = ng.embedding(self.token_emb, tokens)
        pos = ng.embedding(self.pos_emb, np.tile(np.arange(S), (B, 1)))
        x = ng.add(emb, pos)
        c = self.cond(ng.tensor(e_text.reshape(B, 1, -1)))
        x = ng.concat([c, x], axis=1)
        h = self.backbone(x)
        h = ng.narrow(h, 1, 1, S)  # drop the conditioning slot
        return self.head(h)


class ResidualTransformer(Module):
    """Refinement model for quantizer levels 2..L: consumes the summed
    embeddings of all earlier levels plus a level embedding, and predicts
    the tokens of the target level with a per-level output head."""

    def __init__(self, vocab: int, n_levels: int, seq_len: int, text_width: int,
                 width: int = 128, heads: int = 4, blocks: int = 4, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        if n_levels < 2:
            raise ValueError("residual transformer needs at least 2 levels")
        self.vocab = vocab
        self.n_levels = n_levels
        self.seq_len = seq_len
        self.level_tables = [
            self.add_param(f"emb{l}", rng.normal(0, 0.02, size=(vocab, width)))
            for l in range(n_levels)
        ]
        self.level_emb = self.add_param(
            "level_emb", rng.normal(0, 0.02, size=(n_levels, width)))
        self.pos_emb = self.add_param(
            "pos_emb", rng.normal(0, 0.02, size=(seq_len, width)))
        self.cond = _Linear(self, "cond", text_width, width, rng)
        self.backbone = TransformerBackbone(self, "bb", width, heads, blocks, rng)
        self.heads_ = [
            _Linear(self, f"head{l}", width, vocab, rng)
            for l in range(1, n_levels)
        ]

    def logits(self, tokens: np.ndarray, level: int, e_text: np.ndarray) -> ng.Tensor:
        """tokens (B, S, L) full grid; `level` in [2, n_levels] is the
        1-based target level; only layers below it are consumed."""
        if not 2 <= level <= self.n_levels:
            raise ValueError(f"level must be in [2, {self.n_levels}], got {level}")
        B, S, _ = tokens.shape
        x = None
        for j in range(level - 1):
            e = ng.embedding(self.level_tables[j], tokens[:, :, j])
            x = e if x is None else ng.add(x, e)
        lv = ng.embedding(self.level_emb, np.full((B, S), level - 1))
        pos = ng.embedding(self.pos_emb, np.tile(np.arange(S), (B, 1)))
        x = ng.add(ng.add(x, lv), pos)
        c = self.cond(ng.tensor(e_text.reshape(B, 1, -1)))
        x = ng.concat([c, x], axis=1)
        h = self.backbone(x)
        h = ng.narrow(h, 1, 1, S)
        return self.heads_[level - 2](h)


def _apply_cond_dropout(e_text: np.ndarray, rng, p: float) -> np.ndarray:
    if p <= 0:
        return e_text
    out = e_text.copy()
    drop = rng.random(e_text.shape[0]) < p
    out[drop] = 0.0
    return out


def train_masked_step(model: MaskedTransformer, tokens_base: np.ndarray,
                      e_text: np.ndarray, rng, cond_dropout: float = 0.1):
    """One masked-modeling step: sample a cosine-schedule mask ratio per
    sequence, replace those base tokens with the mask token, and return the
    cross-entropy over masked positions only (plus the mask bookkeeping)."""
    B, S = tokens_base.shape
    inp = tokens_base.copy()
    mask = np.zeros((B, S), dtype=bool)
    for b in range(B):
        ratio = cosine_mask_ratio(rng.uniform(0.0, 1.0))
        n_mask = max(1, int(round(ratio * S)))
        pos = rng.choice(S, size=min(n_mask, S), replace=False)
        mask[b, pos] = True
    inp[mask] = model.mask_id
    e = _apply_cond_dropout(e_text, rng, cond_dropout)
    logits = model.logits(inp, e)
    flat = ng.reshape(logits, (B * S, model.vocab))
    loss = ng.cross_entropy(flat, tokens_base.reshape(-1),
                            weights=mask.reshape(-1).astype(np.float64))
    return loss, mask


def train_residual_step(model: ResidualTransformer, tokens: np.ndarray,
                        e_text: np.ndarray, rng, cond_dropout: float = 0.1):
    """One residual step: pick a target level uniformly in [2, L], condition
    on the true tokens of all lower levels, cross-entropy at all positions."""
    B, S, L = tokens.shape
    level = int(rng.integers(2, L + 1))
    e = _apply_cond_dropout(e_text, rng, cond_dropout)
    logits = model.logits(tokens, level, e)
    flat = ng.reshape(logits, (B * S, model.vocab))
    loss = ng.cross_entropy(flat, tokens[:, :, level - 1].reshape(-1))
    return loss, level


def _guided(model_logits_cond: np.ndarray, model_logits_uncond: np.ndarray,
            scale: float) -> np.ndarray:
    return (1.0 + scale) * model_logits_cond - scale * model_logits_uncond


def _sample_categorical(probs: np.ndarray, rng) -> np.ndarray:
    """Row-wise categorical sample from (N, M) probabilities."""
    u = rng.random((probs.shape[0], 1))
    return (probs.cumsum(axis=1) < u).sum(axis=1).clip(0, probs.shape[1] - 1)


def _softmax_np(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def generate_tokens(masked: MaskedTransformer, residual, e_text: np.ndarray,
                    seq_len: int, n_levels: int, rng, steps: int = 10,
                    cfg_scale: float = 4.0) -> np.ndarray:
    """Three-stage latent generation for a single prompt embedding.

    Stage 1 iteratively fills base tokens (confidence-ordered cosine
    schedule, committed positions never resampled); stage 2 fills levels
    2..L greedily with the residual transformer. Returns (seq_len, L)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    e_c = e_text.reshape(1, -1)
    e_u = np.zeros_like(e_c)
    tokens = np.full((1, seq_len), masked.mask_id, dtype=np.int64)
    committed = np.zeros(seq_len, dtype=bool)
    for i in range(steps):
        lc = masked.logits(tokens, e_c).data
        lu = masked.logits(tokens, e_u).data
        g = _guided(lc, lu, cfg_scale)[0]  # (S, M)
        probs = _softmax_np(g)
        open_pos = np.flatnonzero(~committed)
        samp = _sample_categorical(probs[open_pos], rng)
        conf = probs[open_pos, samp]
        frac_masked_next = cosine_mask_ratio((i + 1) / steps)
        n_commit_total = seq_len - int(math.floor(frac_masked_next * seq_len))
        n_new = max(1, n_commit_total - int(committed.sum()))
        n_new = min(n_new, open_pos.size)
        order = np.argsort(-conf, kind="stable")[:n_new]
        chosen = open_pos[order]
        tokens[0, chosen] = samp[order]
        committed[chosen] = True
        if committed.all():
            break
    grid = np.zeros((seq_len, n_levels), dtype=np.int64)
    grid[:, 0] = tokens[0]
    if n_levels > 1:
        if residual is None:
            raise ValueError("residual transformer required for multi-level stacks")
        full = grid[None]
        for level in range(2, n_levels + 1):
            lc = residual.logits(full, level, e_c).data
            lu = residual.logits(full, level, e_u).data
            g = _guided(lc, lu, cfg_scale)[0]
            full[0, :, level - 1] = g.argmax(axis=-1)
        grid = full[0]
    return grid
