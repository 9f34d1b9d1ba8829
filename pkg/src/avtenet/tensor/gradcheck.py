from __future__ import annotations

import numpy as np

from .autograd import no_grad
from .ops import backward


def grad_check(forward, params, eps: float = 1e-5, samples_per_param: int = 6,
               seed: int = 0, sabotage: float = 0.0, alt_eps: float | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``forward`` is a zero-argument closure returning a scalar Tensor computed
    from ``params``. Up to ``samples_per_param`` entries of every parameter
    are perturbed. ``sabotage`` scales the analytic gradient by ``1 + sabotage``
    and exists only as a negative control.

    With ``alt_eps`` each entry is also differenced at that step and the
    closer estimate is kept. Large steps can straddle a ReLU kink and small
    ones lose digits to roundoff; a wrong analytic gradient disagrees with both.
    """
    params.zero_grad()
    loss = forward()
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError("forward produced a non-finite value")
    analytic = backward(loss, params)
    rng = np.random.default_rng(seed)
    steps = (eps,) if alt_eps is None else (eps, alt_eps)
    worst = 0.0
    with no_grad():
        for name in params:
            p = params[name]
            flat = p.data.reshape(-1)
            count = min(samples_per_param, flat.size)
            picks = rng.choice(flat.size, size=count, replace=False)
            for idx in picks:
                exact = analytic[name].reshape(-1)[idx] * (1.0 + sabotage)
                err = np.inf
                for h in steps:
                    numeric = _central(forward, flat, idx, h, name)
                    err = min(err, abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-12))
                worst = max(worst, err)
    params.zero_grad()
    return worst


def _central(forward, flat, idx, h, name) -> float:
    orig = flat[idx]
    flat[idx] = orig + h
    up = forward().item()
    flat[idx] = orig - h
    down = forward().item()
    flat[idx] = orig
    if not (np.isfinite(up) and np.isfinite(down)):
        raise FloatingPointError(f"non-finite forward while perturbing {name}")
    return (up - down) / (2 * h)
