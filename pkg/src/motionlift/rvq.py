"""Vector quantization: single-codebook VQ and multi-level residual VQ.

Codebooks learn by exponential moving averages of assigned residuals with
dead-entry resets; the encoder trains through a straight-through estimator
plus a commitment loss. Quantization itself is pure numpy; `rvq_apply`
is the graph-aware wrapper used inside training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ndgrad as ng

__all__ = [
    "Codebook",
    "CodebookStack",
    "QuantResult",
    "quantize_rvq",
    "decode_tokens",
    "straight_through",
    "rvq_apply",
    "codebook_update",
]


@dataclass
class Codebook:
    entries: np.ndarray                 # (M, C)
    ema_counts: np.ndarray = None       # (M,)
    ema_sums: np.ndarray = None         # (M, C)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or self.entries.shape[0] < 1:
            raise ValueError(f"codebook entries must be (M,C), got {self.entries.shape}")
        if self.ema_counts is None:
            self.ema_counts = np.ones(self.entries.shape[0])
        if self.ema_sums is None:
            self.ema_sums = self.entries.copy()

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def nearest(self, x: np.ndarray) -> np.ndarray:
        """Indices of nearest entries under squared Euclidean distance.
        Ties resolve to the lowest entry index (argmin convention)."""
        if x.shape[-1] != self.dim:
            raise ValueError(f"dim mismatch: {x.shape[-1]} vs codebook {self.dim}")
        d = (x * x).sum(axis=-1, keepdims=True) \
            - 2.0 * x @ self.entries.T \
            + (self.entries * self.entries).sum(axis=-1)
        return d.argmin(axis=-1)


@dataclass
class CodebookStack:
    levels: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.levels) < 1:
            raise ValueError("codebook stack needs at least one level")
        dims = {cb.dim for cb in self.levels}
        if len(dims) != 1:
            raise ValueError(f"codebook levels disagree on dimension: {dims}")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def dim(self) -> int:
        return self.levels[0].dim

    @classmethod
    def init_from_batch(cls, latents: np.ndarray, n_levels: int, size: int,
                        rng: np.random.Generator) -> "CodebookStack":
        """Seed each level's entries from (residuals of) a real batch, which
        avoids dead codes at the start of training."""
        x = latents.reshape(-1, latents.shape[-1]).copy()
        levels = []
        for _ in range(n_levels):
            pick = rng.choice(x.shape[0], size=size, replace=x.shape[0] < size)
            cb = Codebook(x[pick].copy())
            levels.append(cb)
            x = x - cb.entries[cb.nearest(x)]
        return cls(levels)


@dataclass(frozen=True)
class QuantResult:
    q_sum: np.ndarray          # (T', C)
    tokens: np.ndarray         # (T', L) int
    residual_inputs: list      # r^l fed to each level, length L
    quantized: list            # q^l chosen at each level, length L
    final_residual: np.ndarray


def quantize_rvq(z: np.ndarray, stack: CodebookStack) -> QuantResult:
    """Greedy residual quantization: r1 = z, q_l = nearest code to r_l,
    r_{l+1} = r_l - q_l; the output latent is the sum of all q_l."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != stack.dim:
        raise ValueError(f"latent dim {z.shape[-1]} != codebook dim {stack.dim}")
    r = z.copy()
    tokens, res_in, quantized = [], [], []
    q_sum = np.zeros_like(z)
    for cb in stack.levels:
        idx = cb.nearest(r)
        q = cb.entries[idx]
        res_in.append(r.copy())
        quantized.append(q)
        tokens.append(idx)
        q_sum += q
        r = r - q
    return QuantResult(
        q_sum=q_sum,
        tokens=np.stack(tokens, axis=-1),
        residual_inputs=res_in,
        quantized=quantized,
        final_residual=r,
    )


def decode_tokens(tokens: np.ndarray, stack: CodebookStack) -> np.ndarray:
    """Sum the addressed code vectors: exact inverse of token emission."""
    tokens = np.asarray(tokens)
    if tokens.shape[-1] != stack.n_levels:
        raise ValueError(f"token grid has {tokens.shape[-1]} levels, stack has {stack.n_levels}")
    out = np.zeros(tokens.shape[:-1] + (stack.dim,))
    for l, cb in enumerate(stack.levels):
        idx = tokens[..., l]
        if idx.min() < 0 or idx.max() >= cb.size:
            raise ValueError(f"token out of range for level {l}: [0,{cb.size})")
        out += cb.entries[idx]
    return out


def straight_through(z: ng.Tensor, q_sum: np.ndarray) -> ng.Tensor:
    """Forward value q_sum, backward identity into z."""
    if z.data.shape != q_sum.shape:
        raise ValueError(f"straight_through: {z.data.shape} vs {q_sum.shape}")
    return ng.add(z, ng.tensor(q_sum - z.data))


def rvq_apply(z: ng.Tensor, stack: CodebookStack):
    """Quantize a latent tensor inside the autodiff graph.

    Returns (quantized tensor via straight-through, token grid, commitment
    loss, per-level residual inputs for the EMA codebook update).
    """
    result = quantize_rvq(z.data, stack)
    commit = None
    r = z
    for q in result.quantized:
        term = ng.mse(r, ng.tensor(q))  # q is detached by construction
        commit = term if commit is None else ng.add(commit, term)
        r = ng.sub(r, ng.tensor(q))
    return straight_through(z, result.q_sum), result.tokens, commit, result.residual_inputs


def codebook_update(stack: CodebookStack, residual_inputs, tokens: np.ndarray,
                    rng: np.random.Generator, decay: float = 0.99,
                    reset_threshold: float = 1.0) -> None:
    """EMA update of entry means toward their assigned residuals, with
    dead entries (ema count below threshold) reseeded from batch samples."""
    if not 0.0 < decay < 1.0:
        raise ValueError(f"decay must be in (0,1), got {decay}")
    tokens = tokens.reshape(-1, stack.n_levels)
    for l, cb in enumerate(stack.levels):
        r = residual_inputs[l].reshape(-1, stack.dim)
        idx = tokens[:, l]
        counts = np.bincount(idx, minlength=cb.size).astype(np.float64)
        sums = np.zeros_like(cb.ema_sums)
        np.add.at(sums, idx, r)
        cb.ema_counts = decay * cb.ema_counts + (1 - decay) * counts
        cb.ema_sums = decay * cb.ema_sums + (1 - decay) * sums
        live = cb.ema_counts >= 1e-12
        cb.entries[live] = cb.ema_sums[live] / cb.ema_counts[live, None]
        dead = np.flatnonzero(cb.ema_counts < reset_threshold)
        if dead.size:
            pick = rng.choice(r.shape[0], size=dead.size, replace=r.shape[0] < dead.size)
            cb.entries[dead] = r[pick]
            cb.ema_sums[dead] = r[pick]
            cb.ema_counts[dead] = 1.0
