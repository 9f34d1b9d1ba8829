"""Fused differentiable primitives and the backward pass."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import Tensor, _make, as_tensor, concat, matmul, unbroadcast


def softmax(t, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max-shifted)."""
    t = as_tensor(t)
    if not -t.ndim <= axis < t.ndim:
        raise ValueError(f"axis {axis} out of range for rank {t.ndim}")
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (t,), bw)


def log_softmax(t, axis: int = -1) -> Tensor:
    t = as_tensor(t)
    if not -t.ndim <= axis < t.ndim:
        raise ValueError(f"axis {axis} out of range for rank {t.ndim}")
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (t,), bw)


def layer_norm(t, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis with population variance, then scale and shift."""
    t, gain, bias = as_tensor(t), as_tensor(gain), as_tensor(bias)
    if t.ndim == 0 or t.shape[-1] < 1:
        raise ValueError("layer_norm needs a last axis of extent >= 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = t.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        gx = g * gain.data
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        dgain = unbroadcast(g * xhat, gain.shape)
        dbias = unbroadcast(g, bias.shape)
        return dx, dgain, dbias

    return _make(out, (t, gain, bias), bw)


def conv_out_len(length: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def conv1d(x, kernels, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D cross-correlation.

    ``x`` is ``(..., C_in, T)``; ``kernels`` is ``(C_out, C_in, K)``. Output is
    ``(..., C_out, T')`` with ``T' = (T + 2*padding - K) // stride + 1``.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    c_out, c_in, k = kernels.shape
    if x.shape[-2] != c_in:
        raise ValueError(f"input has {x.shape[-2]} channels, kernels expect {c_in}")
    t_len = x.shape[-1]
    if k > t_len + 2 * padding:
        raise ValueError("kernel longer than padded input")
    pad_spec = [(0, 0)] * (x.ndim - 1) + [(padding, padding)]
    xp = np.pad(x.data, pad_spec)
    t_out = conv_out_len(t_len, k, stride, padding)
    win = sliding_window_view(xp, k, axis=-1)[..., ::stride, :]  # (..., C_in, T', K)
    out = np.einsum("...ctk,ock->...ot", win, kernels.data, optimize=True)
    parents = (x, kernels)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[:, None]
        parents = parents + (bias,)

    def bw(g):
        gk = np.einsum("...ot,...ctk->ock", g, win, optimize=True)
        gxp = np.zeros_like(xp)
        span = stride * (t_out - 1) + 1
        for j in range(k):
            gxp[..., j:j + span:stride] += np.einsum("...ot,oc->...ct", g, kernels.data[:, :, j])
        gx = gxp[..., padding:padding + t_len]
        grads = (gx, gk)
        if bias is not None:
            grads = grads + (g.reshape(-1, c_out, t_out).sum(axis=(0, 2)),)
        return grads

    return _make(out, parents, bw)


def conv2d(x, kernels, bias=None, padding: int = 0) -> Tensor:
    """2-D stride-1 cross-correlation on ``(N, C_in, H, W)`` input (im2col + matmul)."""
    x, kernels = as_tensor(x), as_tensor(kernels)
    c_out, c_in, kh, kw = kernels.shape
    if x.ndim != 4 or x.shape[1] != c_in:
        raise ValueError(f"conv2d expects (N, {c_in}, H, W) input, got {x.shape}")
    n, _, h, w = x.shape
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ValueError("kernel larger than padded input")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho, wo = h + 2 * padding - kh + 1, w + 2 * padding - kw + 1
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (N, C, Ho, Wo, kh, kw)
    # column order (kh, kw, C) keeps each tap's channels contiguous for the scatter below
    cols = win.transpose(0, 2, 3, 4, 5, 1).reshape(n * ho * wo, kh * kw * c_in)
    wmat = kernels.data.transpose(0, 2, 3, 1).reshape(c_out, -1)
    out = (cols @ wmat.T).reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)
    parents = (x, kernels)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents = parents + (bias,)

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, c_out)
        gk = (g2.T @ cols).reshape(c_out, kh, kw, c_in).transpose(0, 3, 1, 2)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat).reshape(n, ho, wo, kh * kw, c_in)
            gxp = np.zeros((n, ho + kh - 1, wo + kw - 1, c_in))
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + ho, j:j + wo, :] += gcols[:, :, :, i * kw + j, :]
            gx = np.ascontiguousarray(
                gxp.transpose(0, 3, 1, 2)[:, :, padding:padding + h, padding:padding + w])
        grads = (gx, np.ascontiguousarray(gk))
        if bias is not None:
            grads = grads + (g2.sum(axis=0),)
        return grads

    return _make(np.ascontiguousarray(out), parents, bw)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` shaped ``(in, out)``."""
    out = matmul(x, weight)
    if bias is not None:
        out = out + bias
    return out


def multi_head_attention(q, k, v, heads: int, weights: dict) -> Tensor:
    """Scaled dot-product attention over ``(..., N, d)`` token tensors.

    ``weights`` holds ``wq, wk, wv, wo`` of shape ``(d, d)`` and optional
    biases ``bq, bk, bv, bo``.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = q.shape[-1]
    if heads < 1 or d % heads:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError("key and value token counts differ")
    hd = d // heads

    def project(x, name):
        return linear(x, weights["w" + name], weights.get("b" + name))

    def split(x):
        lead = x.shape[:-2]
        n = x.shape[-2]
        x = x.reshape(lead + (n, heads, hd))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return x.transpose(axes)

    qh, kh, vh = split(project(q, "q")), split(project(k, "k")), split(project(v, "v"))
    scores = matmul(qh, kh.swapaxes(-1, -2)) * (1.0 / np.sqrt(hd))
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, vh)  # (..., heads, Nq, hd)
    lead = ctx.shape[:-3]
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = ctx.transpose(axes).reshape(lead + (q.shape[-2], d))
    return linear(ctx, weights["wo"], weights.get("bo"))


def concat_last(tensors) -> Tensor:
    return concat(tensors, axis=-1)


def backward(loss: Tensor, params=None) -> dict:
    """Accumulate d(loss)/d(leaf) into ``.grad`` for every reachable leaf.

    Returns a name -> gradient map over ``params`` when given (zeros for
    parameters the loss does not reach). The recorded tape is released.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    for node in order:
        if node._backward is not None:
            node._parents = ()
            node._backward = None

    if params is None:
        return {}
    return {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
