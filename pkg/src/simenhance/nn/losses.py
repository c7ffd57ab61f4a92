"""Loss functions returning ``(loss, d_loss / d_prediction)``."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError

BCE_EPS = 1e-7


def _check(prediction, target):
    p = np.asarray(prediction, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction shape {p.shape} != target shape {t.shape}")
    return p, t


def mse_loss(prediction, target) -> tuple[float, np.ndarray]:
    p, t = _check(prediction, target)
    diff = p - t
    # overflow becomes inf; callers check finiteness and raise
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def bce_loss(prediction, label) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on probabilities clamped to ``[eps, 1 - eps]``.

    The gradient is evaluated at the clamped probability and passed straight
    through the clamp, so a saturated sigmoid still receives a learning signal.
    """
    p, y = _check(prediction, label)
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    loss = -np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p)) / p.size
    return float(loss), grad
