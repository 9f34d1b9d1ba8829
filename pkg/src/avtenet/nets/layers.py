"""Building blocks shared by the classifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import Module, Tensor, concat, conv1d, conv2d, gelu, layer_norm, linear, relu
from ..tensor.ops import multi_head_attention
from ..tensor.params import glorot, normal, ones, zeros


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 64
    heads: int = 4
    layers: int = 2
    ffn_dim: int = 128
    token_budget: int = 64

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("encoder needs at least one layer")
        if self.heads < 1 or self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.heads} heads")
        if self.ffn_dim < 1 or self.token_budget < 1:
            raise ValueError("ffn_dim and token_budget must be positive")


@dataclass(frozen=True)
class MSTCNConfig:
    blocks: int = 2
    kernel_sizes: tuple = (3, 5, 7)
    channels: int = 66

    def __post_init__(self):
        if any(k % 2 == 0 for k in self.kernel_sizes):
            raise ValueError("MS-TCN kernels must be odd")
        if self.channels % len(self.kernel_sizes):
            raise ValueError(f"{self.channels} channels not divisible by {len(self.kernel_sizes)} branches")
        if self.blocks < 1:
            raise ValueError("MS-TCN needs at least one block")


class Linear(Module):
    def __init__(self, rng, n_in: int, n_out: int, bias: bool = True):
        self.weight = glorot(rng, (n_in, n_out), n_in, n_out)
        self.bias = zeros((n_out,)) if bias else None

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = ones((dim,))
        self.bias = zeros((dim,))
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias, self.eps)


class Attention(Module):
    def __init__(self, rng, d: int, heads: int):
        self.heads = heads
        for name in "qkvo":
            setattr(self, "w" + name, glorot(rng, (d, d), d, d))
        # no key bias: it shifts every score of a query equally and softmax cancels it
        self.bq = zeros((d,))
        self.bv = zeros((d,))
        self.bo = zeros((d,))

    def weights(self) -> dict:
        return {k: getattr(self, k) for k in ("wq", "wk", "wv", "wo", "bq", "bv", "bo")}

    def __call__(self, x):
        return multi_head_attention(x, x, x, self.heads, self.weights())


class EncoderBlock(Module):
    """Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x)) with GELU."""

    def __init__(self, rng, cfg: EncoderConfig):
        self.ln1 = LayerNorm(cfg.d_model)
        self.attn = Attention(rng, cfg.d_model, cfg.heads)
        self.ln2 = LayerNorm(cfg.d_model)
        self.fc1 = Linear(rng, cfg.d_model, cfg.ffn_dim)
        self.fc2 = Linear(rng, cfg.ffn_dim, cfg.d_model)

    def __call__(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.fc2(gelu(self.fc1(self.ln2(x))))


class Encoder(Module):
    """Transformer encoder with learned positions and an optional cls token."""

    def __init__(self, rng, cfg: EncoderConfig, cls_token: bool = True):
        self.cfg = cfg
        self.cls = normal(rng, (1, cfg.d_model), 0.02) if cls_token else None
        self.pos = zeros((cfg.token_budget, cfg.d_model))
        self.blocks = [EncoderBlock(rng, cfg) for _ in range(cfg.layers)]
        self.norm = LayerNorm(cfg.d_model)

    def __call__(self, tokens: Tensor) -> Tensor:
        """``(..., N, d)`` -> ``(..., N', d)``; with a cls token, position 0 is the cls output."""
        lead, n = tokens.shape[:-2], tokens.shape[-2]
        if self.cls is not None:
            from ..tensor.autograd import broadcast_to

            cls = broadcast_to(self.cls, lead + (1, self.cfg.d_model))
            tokens = concat([cls, tokens], axis=-2)
            n += 1
        if n > self.cfg.token_budget:
            raise ValueError(f"sequence of {n} tokens exceeds positional table of {self.cfg.token_budget}")
        x = tokens + self.pos[:n]
        for block in self.blocks:
            x = block(x)
        return self.norm(x)


def encoder_forward(tokens, encoder: Encoder):
    """Return ``(cls_out, token_outs)`` for an encoder with a cls token."""
    out = encoder(tokens)
    return out[..., 0, :], out[..., 1:, :]


class MSTCN(Module):
    """Multiscale temporal conv stack over ``(..., C, T)`` sequences."""

    def __init__(self, rng, cfg: MSTCNConfig):
        self.cfg = cfg
        width = cfg.channels // len(cfg.kernel_sizes)
        self.blocks = [MSTCNBlock(rng, cfg.channels, width, cfg.kernel_sizes) for _ in range(cfg.blocks)]

    def __call__(self, x):
        for block in self.blocks:
            x = block(x)
        return x


class MSTCNBlock(Module):
    def __init__(self, rng, channels: int, width: int, kernel_sizes):
        self.branches = [ConvBranch(rng, channels, width, k) for k in kernel_sizes]

    def __call__(self, x):
        return x + relu(concat([b(x) for b in self.branches], axis=-2))


class ConvBranch(Module):
    def __init__(self, rng, c_in: int, c_out: int, k: int):
        self.k = k
        self.weight = glorot(rng, (c_out, c_in, k), c_in * k, c_out * k)
        self.bias = zeros((c_out,))

    def __call__(self, x):
        return conv1d(x, self.weight, self.bias, stride=1, padding=self.k // 2)


def mstcn_forward(seq, mstcn: MSTCN):
    """``(..., T, C)`` -> ``(..., T, C)``."""
    if seq.shape[-1] != mstcn.cfg.channels:
        raise ValueError(f"sequence has {seq.shape[-1]} channels, MS-TCN expects {mstcn.cfg.channels}")
    return mstcn(seq.swapaxes(-1, -2)).swapaxes(-1, -2)


class Conv2d(Module):
    def __init__(self, rng, c_in: int, c_out: int, k: int):
        self.k = k
        self.weight = glorot(rng, (c_out, c_in, k, k), c_in * k * k, c_out * k * k)
        self.bias = zeros((c_out,))

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias, padding=self.k // 2)


class ResBlock2d(Module):
    """Two 3x3 convs with a 1x1 projection shortcut."""

    def __init__(self, rng, c_in: int, c_out: int):
        self.conv1 = Conv2d(rng, c_in, c_out, 3)
        self.conv2 = Conv2d(rng, c_out, c_out, 3)
        self.shortcut = Conv2d(rng, c_in, c_out, 1)

    def __call__(self, x):
        return relu(self.shortcut(x) + self.conv2(relu(self.conv1(x))))


class Head(Module):
    """Linear 2-logit classifier, logits ordered ``[real, fake]``."""

    def __init__(self, rng, dim: int):
        self.weight = glorot(rng, (dim, 2), dim, 2)
        self.bias = zeros((2,))

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


def delta_kernels(c: int, k: int, rows: slice) -> np.ndarray:
    """Kernels mapping channels ``rows`` of the input straight through (centre tap 1)."""
    w = np.zeros((rows.stop - rows.start, c, k))
    for o, i in enumerate(range(rows.start, rows.stop)):
        w[o, i, k // 2] = 1.0
    return w
