from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, clip, log, softmax

CLAMP = 1e-12


def bce_loss(pred_real, y_real) -> Tensor:
    """Mean binary cross-entropy of predicted P(real) against labels (1 = real)."""
    pred = as_tensor(pred_real)
    y = np.asarray(y_real, dtype=np.float64).reshape(pred.shape)
    if pred.size == 0:
        raise ValueError("empty batch")
    p = clip(pred, CLAMP, 1.0 - CLAMP)
    total = (log(p) * y + log(1.0 - p) * (1.0 - y)).sum()
    return total * (-1.0 / pred.size)


def logits_bce(logits: Tensor, y_fake) -> Tensor:
    """BCE on softmax(logits)[real] for 1 = fake labels (converted to 1 = real)."""
    p_real = softmax(logits, axis=-1)[..., 0]
    return bce_loss(p_real, 1 - np.asarray(y_fake))
