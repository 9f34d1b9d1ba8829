"""Gradient checks: every primitive on small random shapes, every classifier at toy size."""

from __future__ import annotations

import numpy as np

from ..losses import logits_bce
from ..nets.layers import EncoderConfig, MSTCNConfig
from ..nets.models import AudioNet, AudioVisualNet, ConcatAVNet, VideoNet
from ..synthdata import Category, generate_sample
from ..tensor import (
    ParameterSet,
    Tensor,
    clip,
    concat,
    conv1d,
    conv2d,
    gelu,
    grad_check,
    layer_norm,
    linear,
    log_softmax,
    multi_head_attention,
    softmax,
    stack,
)
from ..tensor.autograd import broadcast_to

TOY_ENCODER = EncoderConfig(d_model=8, heads=2, layers=1, ffn_dim=16)


def toy_network(kind: str, seed: int):
    rng = np.random.default_rng(seed)
    if kind == "vn":
        return VideoNet(rng, TOY_ENCODER)
    if kind == "an":
        return AudioNet(rng, TOY_ENCODER)
    if kind == "avn_fused":
        return AudioVisualNet(rng, TOY_ENCODER, conv_channels=(2, 2), mstcn=MSTCNConfig(1, (3, 5, 7), 6))
    if kind == "avn_concat":
        return ConcatAVNet(rng, TOY_ENCODER)
    raise ValueError(f"unknown network {kind!r}")


def toy_batch(seed: int):
    samples = [generate_sample(seed, i, i, cat) for i, cat in enumerate((Category.RvRa, Category.FvFa))]
    audio = np.stack([s.waveform for s in samples])
    video = np.stack([s.frames for s in samples])
    boxes = np.array([s.lip_box for s in samples])
    return audio, video, boxes, np.array([0, 1])


def network_gradcheck(kind: str, seed: int = 1, eps: float = 1e-5, samples_per_param: int = 3,
                      sabotage: float = 0.0, alt_eps: float | None = 1e-6) -> float:
    """Max relative gradient error of a toy ``kind`` network on a 2-clip BCE loss."""
    net = toy_network(kind, seed)
    audio, video, boxes, y = toy_batch(seed)
    feats = net.featurize(audio, video, boxes)
    # shrink towards a non-saturated loss and jitter off the zero-bias init, where
    # ReLUs sit exactly on their kink and one-sided differences disagree
    jitter = np.random.default_rng([seed, 3])
    for name in net.parameters():
        p = net.parameters()[name]
        p.data = 0.5 * p.data + jitter.normal(0.0, 0.02, size=p.shape)

    def forward():
        logits, _ = net.forward(*feats)
        return logits_bce(logits, y)

    return grad_check(forward, net.parameters(), eps=eps, samples_per_param=samples_per_param,
                      seed=seed, sabotage=sabotage, alt_eps=alt_eps)


def _away_from_zero(rng, shape, margin=0.2):
    """Values with |x| >= margin so kinked primitives stay differentiable under perturbation."""
    x = rng.normal(size=shape)
    return np.where(x >= 0, x + margin, x - margin)


def _mha(rng, q):
    d = q.shape[-1]
    w = {n: Tensor(rng.normal(0, 0.5, (d, d)), requires_grad=True) for n in ("wq", "wk", "wv", "wo")}
    # no bk: its gradient is identically zero, so a relative error would only measure noise
    w.update({n: Tensor(rng.normal(0, 0.1, d), requires_grad=True) for n in ("bq", "bv", "bo")})
    return w


# name -> (input builder, op); inputs are created with requires_grad
PRIMITIVES = {
    "add": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))], lambda a, b: a + b),
    "sub": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 1))], lambda a, b: a - b),
    "mul": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 3))], lambda a, b: a * b),
    "div": (lambda r: [r.normal(size=(2, 3)), r.uniform(0.5, 2.0, (2, 3))], lambda a, b: a / b),
    "neg": (lambda r: [r.normal(size=(5,))], lambda a: -a),
    "power": (lambda r: [r.uniform(0.5, 2.0, (3, 3))], lambda a: a ** 1.7),
    "matmul": (lambda r: [r.normal(size=(2, 3, 4)), r.normal(size=(4, 5))], lambda a, b: a @ b),
    "exp": (lambda r: [r.normal(size=(4,))], lambda a: a.exp()),
    "log": (lambda r: [r.uniform(0.5, 3.0, (4,))], lambda a: a.log()),
    "tanh": (lambda r: [r.normal(size=(4,))], lambda a: a.tanh()),
    "relu": (lambda r: [_away_from_zero(r, (3, 4))], lambda a: a.relu()),
    "gelu": (lambda r: [r.normal(size=(3, 4))], gelu),
    "clip": (lambda r: [r.choice([-1.0, 1.0], (3, 4)) * r.uniform(0.1, 0.4, (3, 4)) * 3],
             lambda a: clip(a, -0.5, 0.5)),
    "sum": (lambda r: [r.normal(size=(3, 4))], lambda a: a.sum(axis=1, keepdims=True)),
    "mean": (lambda r: [r.normal(size=(3, 4))], lambda a: a.mean(axis=0)),
    "reshape": (lambda r: [r.normal(size=(3, 4))], lambda a: a.reshape(2, 6)),
    "transpose": (lambda r: [r.normal(size=(2, 3, 4))], lambda a: a.transpose(2, 0, 1)),
    "getitem": (lambda r: [r.normal(size=(4, 5))], lambda a: a[1:3, ::2]),
    "gather": (lambda r: [r.normal(size=(4, 5))], lambda a: a[np.array([0, 2, 2]), 1]),
    "concat": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 2))], lambda a, b: concat([a, b], axis=1)),
    "stack": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 3))], lambda a, b: stack([a, b], axis=1)),
    "broadcast_to": (lambda r: [r.normal(size=(1, 3))], lambda a: broadcast_to(a, (4, 3))),
    "softmax": (lambda r: [r.normal(size=(3, 5))], lambda a: softmax(a, axis=-1)),
    "log_softmax": (lambda r: [r.normal(size=(3, 5))], lambda a: log_softmax(a, axis=0)),
    "layer_norm": (lambda r: [r.normal(size=(3, 6)), r.normal(size=(6,)), r.normal(size=(6,))],
                   lambda x, g, b: layer_norm(x, g, b)),
    "conv1d": (lambda r: [r.normal(size=(2, 3, 9)), r.normal(size=(4, 3, 3)), r.normal(size=(4,))],
               lambda x, k, b: conv1d(x, k, b, stride=2, padding=1)),
    "conv2d": (lambda r: [r.normal(size=(2, 2, 5, 4)), r.normal(size=(3, 2, 3, 3)), r.normal(size=(3,))],
               lambda x, k, b: conv2d(x, k, b, padding=1)),
    "linear": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(4, 2)), r.normal(size=(2,))], linear),
}


def primitive_gradcheck(name: str, seed: int = 0, eps: float = 1e-5) -> float:
    """Max relative error of one primitive under a random linear read-out."""
    rng = np.random.default_rng(seed)
    if name == "mha":
        x = Tensor(rng.normal(size=(2, 5, 4)), requires_grad=True)
        weights = _mha(rng, x)
        params = ParameterSet({"x": x, **weights})

        def op():
            return multi_head_attention(x, x, x, 2, weights)
    else:
        build, fn = PRIMITIVES[name]
        inputs = [Tensor(a, requires_grad=True) for a in build(rng)]
        params = ParameterSet({f"in{i}": t for i, t in enumerate(inputs)})

        def op():
            return fn(*inputs)

    readout = rng.normal(size=op().shape)

    def forward():
        return (op() * readout).sum()

    return grad_check(forward, params, eps=eps, samples_per_param=12, seed=seed)


PRIMITIVE_NAMES = tuple(PRIMITIVES) + ("mha",)
