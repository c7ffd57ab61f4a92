"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import NetworkModel


@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    location: tuple | None = None  # (layer, param name, index) or ("input", index)
    checked: int = 0
    errors: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.checked == 0


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """Worst absolute discrepancy relative to the tensor's largest gradient entry.

    Scaling per tensor rather than per element keeps entries whose true
    gradient is ~0 (a bias feeding batch norm, say) from turning pure
    finite-difference round-off into a huge ratio.
    """
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def gradient_check(
    model: NetworkModel,
    batch: np.ndarray,
    loss: Callable[[np.ndarray], tuple[float, np.ndarray]],
    h: float = 1e-6,
    training: bool = True,
    check_input: bool = False,
) -> GradCheckReport:
    """Compare every analytic parameter gradient with a central difference.

    ``loss`` maps the network output to ``(value, gradient)``. Running
    statistics are never updated while probing. With ``check_input`` the
    gradient with respect to ``batch`` is checked too (location ``("input",)``).
    """
    batch = np.array(batch, dtype=np.float64)

    def value(x):
        out, _ = model.forward(x, training=training, update_stats=False)
        return loss(out)[0]

    out, cache = model.forward(batch, training=training, update_stats=False)
    _, dout = loss(out)
    grads, dx = model.backward(cache, dout)

    report = GradCheckReport()

    def probe(arr, analytic, where):
        numeric = np.zeros(arr.shape)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            plus = value(batch)
            arr[idx] = orig - h
            minus = value(batch)
            arr[idx] = orig
            numeric[idx] = (plus - minus) / (2 * h)
        if numeric.size == 0:
            return
        err = relative_error(analytic, numeric)
        report.checked += numeric.size
        report.errors[where] = err
        if err >= report.max_rel_error:
            report.max_rel_error = err
            worst = np.unravel_index(int(np.argmax(np.abs(analytic - numeric))), arr.shape)
            report.location = where + (tuple(int(i) for i in worst),)

    for i, g_layer in enumerate(grads):
        for name, g in g_layer.items():
            probe(model.params[i][name], g, (i, name))
    if check_input:
        probe(batch, dx, ("input",))
    return report
