"""Convolutional encoder/decoder pair for 2D-to-3D lifting and the frozen
2D prior (VQ-VAE by default, plain AE and continuous VAE as ablations).

Both encoder and decoder are built from three residual 1D convolution
blocks around strided down/upsampling stages; the encoder halves the
temporal axis once per stage (default two stages, T' = T/4).
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import ndgrad as ng
from .rvq import Codebook, CodebookStack, rvq_apply

__all__ = [
    "Module",
    "ConvEncoder",
    "ConvDecoder",
    "MLRQ",
    "Prior2D",
    "pad_to_grid",
]


def _he(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Module:
    """Flat parameter registry with deterministic naming."""

    def __init__(self):
        self._params: dict[str, ng.Tensor] = {}

    def add_param(self, name: str, value: np.ndarray) -> ng.Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        p = ng.param(value)
        self._params[name] = p
        return p

    def params(self) -> dict:
        return dict(self._params)

    def param_list(self):
        return [self._params[k] for k in sorted(self._params)]

    def state(self) -> dict:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state(self, state: dict):
        for k, p in self._params.items():
            if k not in state:
                raise KeyError(f"missing parameter {k!r} in state")
            if state[k].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k!r}: {state[k].shape} vs {p.data.shape}")
            p.data[...] = state[k]

    def set_trainable(self, flag: bool):
        for p in self._params.values():
            p.requires_grad = flag

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k in sorted(self._params):
            h.update(k.encode())
            h.update(self._params[k].data.tobytes())
        return h.hexdigest()


class _Conv:
    def __init__(self, owner: Module, name: str, cin: int, cout: int, k: int,
                 stride: int, pad: int, rng):
        self.w = owner.add_param(f"{name}.w", _he(rng, (k, cin, cout), k * cin))
        self.b = owner.add_param(f"{name}.b", np.zeros(cout))
        self.stride, self.pad = stride, pad

    def __call__(self, x):
        return ng.add_bias(ng.conv1d(x, self.w, self.stride, self.pad), self.b)


class _ResBlock:
    """conv3 -> relu -> conv3 plus identity skip."""

    def __init__(self, owner: Module, name: str, channels: int, rng):
        self.c1 = _Conv(owner, f"{name}.c1", channels, channels, 3, 1, 1, rng)
        self.c2 = _Conv(owner, f"{name}.c2", channels, channels, 3, 1, 1, rng)

    def __call__(self, x):
        return ng.add(x, self.c2(ng.relu(self.c1(x))))


class ConvEncoder(Module):
    """(B, T, in_dim) -> (B, T / 2^n_down, out_dim)."""

    def __init__(self, in_dim: int, width: int, out_dim: int, rng,
                 n_down: int = 2):
        super().__init__()
        self.n_down = n_down
        self.conv_in = _Conv(self, "in", in_dim, width, 3, 1, 1, rng)
        self.downs = []
        for i in range(n_down):
            down = _Conv(self, f"down{i}", width, width, 4, 2, 1, rng)
            res = _ResBlock(self, f"res{i}", width, rng)
            self.downs.append((down, res))
        self.res_out = _ResBlock(self, "res_out", width, rng)
        self.conv_out = _Conv(self, "out", width, out_dim, 3, 1, 1, rng)

    @property
    def factor(self) -> int:
        return 2 ** self.n_down

    def __call__(self, x: ng.Tensor) -> ng.Tensor:
        T = x.data.shape[1]
        if T < self.factor:
            raise ValueError(f"sequence length {T} below minimum {self.factor}")
        if T % self.factor:
            raise ValueError(f"sequence length {T} not divisible by {self.factor}")
        h = ng.relu(self.conv_in(x))
        for down, res in self.downs:
            h = res(ng.relu(down(h)))
        h = self.res_out(h)
        return self.conv_out(h)


class ConvDecoder(Module):
    """(B, T', in_dim) -> (B, T' * 2^n_up, out_dim); exact mirror of the encoder."""

    def __init__(self, in_dim: int, width: int, out_dim: int, rng, n_up: int = 2):
        super().__init__()
        self.n_up = n_up
        self.conv_in = _Conv(self, "in", in_dim, width, 3, 1, 1, rng)
        self.res_in = _ResBlock(self, "res_in", width, rng)
        self.ups = []
        for i in range(n_up):
            conv = _Conv(self, f"up{i}", width, width, 3, 1, 1, rng)
            res = _ResBlock(self, f"res{i}", width, rng)
            self.ups.append((conv, res))
        self.conv_out = _Conv(self, "out", width, out_dim, 3, 1, 1, rng)

    def __call__(self, z: ng.Tensor) -> ng.Tensor:
        h = self.res_in(ng.relu(self.conv_in(z)))
        for conv, res in self.ups:
            h = res(ng.relu(conv(ng.upsample2(h))))
        return self.conv_out(h)


def pad_to_grid(features: np.ndarray, factor: int):
    """Edge-replicate (T, D) features up to a multiple of `factor`.
    Returns (padded, original_length)."""
    T = features.shape[0]
    rem = (-T) % factor
    if rem == 0:
        return features, T
    pad = np.repeat(features[-1:], rem, axis=0)
    return np.concatenate([features, pad], axis=0), T


class MLRQ:
    """Encoder -> residual quantizer -> decoder, lifting 2D features to 3D.

    The codebook stack is seeded lazily from the first batch of encoder
    latents (avoids dead codes); call `ensure_codebooks` before training.
    """

    def __init__(self, in_dim: int, out_dim: int, width: int, code_dim: int,
                 n_levels: int, codebook_size: int, rng, n_down: int = 2):
        self.encoder = ConvEncoder(in_dim, width, code_dim, rng, n_down)
        self.decoder = ConvDecoder(code_dim, width, out_dim, rng, n_down)
        self.n_levels = n_levels
        self.codebook_size = codebook_size
        self.code_dim = code_dim
        self.stack: CodebookStack | None = None
        # fixed channel statistics: encoder consumes standardized inputs,
        # decoder emits standardized outputs mapped back to scene units
        self.in_mean = np.zeros(in_dim)
        self.in_std = np.ones(in_dim)
        self.out_scale = np.ones(out_dim)
        self.out_shift = np.zeros(out_dim)

    @property
    def factor(self) -> int:
        return self.encoder.factor

    def set_normalization(self, in_mean, in_std, out_scale, out_shift):
        self.in_mean = np.asarray(in_mean, dtype=np.float64)
        self.in_std = np.asarray(in_std, dtype=np.float64)
        self.out_scale = np.asarray(out_scale, dtype=np.float64)
        self.out_shift = np.asarray(out_shift, dtype=np.float64)

    def _normalize_in(self, feats2d: ng.Tensor) -> ng.Tensor:
        return ng.channel_affine(feats2d, 1.0 / self.in_std,
                                 -self.in_mean / self.in_std)

    def ensure_codebooks(self, feats2d: np.ndarray, rng: np.random.Generator):
        if self.stack is not None:
            return
        z = self.encoder(self._normalize_in(ng.tensor(feats2d))).data
        self.stack = CodebookStack.init_from_batch(
            z, self.n_levels, self.codebook_size, rng)

    def param_list(self):
        return self.encoder.param_list() + self.decoder.param_list()

    def forward(self, feats2d: ng.Tensor):
        """Returns (3D features (B,T,out_dim), tokens (B,T',L), commitment
        loss, per-level residual inputs, latent tensor)."""
        if self.stack is None:
            raise RuntimeError("codebooks not initialized; call ensure_codebooks first")
        z = self.encoder(self._normalize_in(feats2d))
        B, Tq, C = z.data.shape
        zf = ng.reshape(z, (B * Tq, C))
        q, tokens, commit, residual_inputs = rvq_apply(zf, self.stack)
        q3 = ng.reshape(q, (B, Tq, C))
        out = ng.channel_affine(self.decoder(q3), self.out_scale, self.out_shift)
        return out, tokens.reshape(B, Tq, self.n_levels), commit, residual_inputs, z

    def decode_grid(self, tokens: np.ndarray) -> np.ndarray:
        """Token grid (B, T', L) -> decoded 3D features (B, T, out_dim)."""
        from .rvq import decode_tokens
        q = decode_tokens(tokens, self.stack)
        return self.decoder(ng.tensor(q)).data * self.out_scale + self.out_shift

    def state(self) -> dict:
        s = {}
        for k, v in self.encoder.state().items():
            s[f"encoder.{k}"] = v
        for k, v in self.decoder.state().items():
            s[f"decoder.{k}"] = v
        if self.stack is not None:
            for l, cb in enumerate(self.stack.levels):
                s[f"codebook.{l}.entries"] = cb.entries.copy()
                s[f"codebook.{l}.ema_counts"] = cb.ema_counts.copy()
                s[f"codebook.{l}.ema_sums"] = cb.ema_sums.copy()
        s["norm.in_mean"] = self.in_mean.copy()
        s["norm.in_std"] = self.in_std.copy()
        s["norm.out_scale"] = self.out_scale.copy()
        s["norm.out_shift"] = self.out_shift.copy()
        return s

    def load_state(self, state: dict):
        self.encoder.load_state({k[len("encoder."):]: v for k, v in state.items()
                                 if k.startswith("encoder.")})
        self.decoder.load_state({k[len("decoder."):]: v for k, v in state.items()
                                 if k.startswith("decoder.")})
        if "norm.in_mean" in state:
            self.set_normalization(state["norm.in_mean"], state["norm.in_std"],
                                   state["norm.out_scale"], state["norm.out_shift"])
        levels = []
        for l in range(self.n_levels):
            key = f"codebook.{l}.entries"
            if key not in state:
                break
            levels.append(Codebook(state[key].copy(),
                                   state[f"codebook.{l}.ema_counts"].copy(),
                                   state[f"codebook.{l}.ema_sums"].copy()))
        if levels:
            self.stack = CodebookStack(levels)


class Prior2D:
    """Autoencoding prior over 2D limb features; reconstruction error of a
    frozen, pretrained instance scores how plausible a 2D pose sequence is.

    kind: 'vqvae' (default), 'vae' (continuous, KL-regularized), or 'ae'.
    """

    def __init__(self, dim: int, width: int, code_dim: int, codebook_size: int,
                 rng, kind: str = "vqvae", n_down: int = 2):
        if kind not in ("vqvae", "vae", "ae"):
            raise ValueError(f"unknown prior kind {kind!r}")
        self.kind = kind
        self.code_dim = code_dim
        self.codebook_size = codebook_size
        enc_out = 2 * code_dim if kind == "vae" else code_dim
        self.encoder = ConvEncoder(dim, width, enc_out, rng, n_down)
        self.decoder = ConvDecoder(code_dim, width, dim, rng, n_down)
        self.stack: CodebookStack | None = None
        self.frozen = False

    @property
    def factor(self) -> int:
        return self.encoder.factor

    def param_list(self):
        return self.encoder.param_list() + self.decoder.param_list()

    def ensure_codebooks(self, feats: np.ndarray, rng: np.random.Generator):
        if self.kind != "vqvae" or self.stack is not None:
            return
        z = self.encoder(ng.tensor(feats)).data
        self.stack = CodebookStack.init_from_batch(z, 1, self.codebook_size, rng)

    def reconstruct(self, x: ng.Tensor, rng: np.random.Generator | None = None):
        """Returns (reconstruction, aux) where aux carries the training-time
        extras: commitment loss + residuals for vqvae, KL term for vae."""
        z = self.encoder(x)
        B, Tq, C = z.data.shape
        aux = {}
        if self.kind == "vqvae":
            if self.stack is None:
                raise RuntimeError("prior codebook not initialized")
            zf = ng.reshape(z, (B * Tq, C))
            q, tokens, commit, residual_inputs = rvq_apply(zf, self.stack)
            aux["commit"] = commit
            aux["tokens"] = tokens
            aux["residual_inputs"] = residual_inputs
            h = ng.reshape(q, (B, Tq, C))
        elif self.kind == "vae":
            mu = ng.narrow(z, 2, 0, self.code_dim)
            logvar = ng.narrow(z, 2, self.code_dim, self.code_dim)
            if rng is not None and not self.frozen:
                noise = ng.tensor(rng.standard_normal(mu.data.shape))
                h = ng.add(mu, ng.mul(ng.exp(ng.smul(logvar, 0.5)), noise))
            else:
                h = mu  # deterministic at scoring time
            # KL(q || N(0,1)) averaged over elements
            one = ng.tensor(np.ones(mu.data.shape))
            kl = ng.smul(ng.mean_all(
                ng.sub(ng.add(ng.mul(mu, mu), ng.exp(logvar)),
                       ng.add(one, logvar))), 0.5)
            aux["kl"] = kl
        else:
            h = z
        return self.decoder(h), aux

    def freeze(self):
        self.encoder.set_trainable(False)
        self.decoder.set_trainable(False)
        self.frozen = True

    def score(self, x: ng.Tensor) -> ng.Tensor:
        """Mean squared reconstruction error; differentiable w.r.t. x only.
        Valid only on a frozen prior (training-order contract)."""
        if not self.frozen:
            raise RuntimeError("prior must be frozen before scoring")
        recon, _ = self.reconstruct(x)
        return ng.mse(recon, x)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.encoder.checksum().encode())
        h.update(self.decoder.checksum().encode())
        if self.stack is not None:
            for cb in self.stack.levels:
                h.update(cb.entries.tobytes())
        return h.hexdigest()

    def state(self) -> dict:
        s = {}
        for k, v in self.encoder.state().items():
            s[f"encoder.{k}"] = v
        for k, v in self.decoder.state().items():
            s[f"decoder.{k}"] = v
        if self.stack is not None:
            cb = self.stack.levels[0]
            s["codebook.0.entries"] = cb.entries.copy()
            s["codebook.0.ema_counts"] = cb.ema_counts.copy()
            s["codebook.0.ema_sums"] = cb.ema_sums.copy()
        s["frozen"] = np.array([1.0 if self.frozen else 0.0])
        return s

    def load_state(self, state: dict):
        self.encoder.load_state({k[len("encoder."):]: v for k, v in state.items()
                                 if k.startswith("encoder.")})
        self.decoder.load_state({k[len("decoder."):]: v for k, v in state.items()
                                 if k.startswith("decoder.")})
        if "codebook.0.entries" in state:
            self.stack = CodebookStack([Codebook(
                state["codebook.0.entries"].copy(),
                state["codebook.0.ema_counts"].copy(),
                state["codebook.0.ema_sums"].copy())])
        if "frozen" in state and state["frozen"][0] > 0:
            self.freeze()
