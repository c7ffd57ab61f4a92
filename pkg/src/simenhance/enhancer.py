"""Wide, shallow MLP that maps coarse simulator windows to high-fidelity ones."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError
from .nn import Activation, AdamConfig, FullyConnected, NetworkModel, adam_step, mse_loss
from .signal import NormParams, TimeSeries, fit_norm, random_offset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnhancerConfig:
    window_len: int = 500
    hidden_width: int = 3200
    epochs: int = 40
    batch_size: int = 15
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    holdout_fraction: float = 0.1

    def __post_init__(self):
        for name in ("window_len", "hidden_width", "batch_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if not 0 <= self.holdout_fraction < 1:
            raise ValidationError("holdout_fraction must lie in [0, 1)")


@dataclass
class PairedDataset:
    """Aligned coarse/fine windows, both normalized with the same parameters."""

    sources: np.ndarray  # (n_pairs, window_len)
    targets: np.ndarray
    norm: NormParams
    offsets: np.ndarray

    def __post_init__(self):
        if self.sources.shape != self.targets.shape:
            raise ValidationError("sources and targets must have the same shape")

    def __len__(self) -> int:
        return self.sources.shape[0]

    @property
    def window_len(self) -> int:
        return self.sources.shape[1]

    def split(self, holdout_fraction: float) -> tuple["PairedDataset", "PairedDataset"]:
        """Train/held-out split by pair index: the last ``holdout_fraction`` is held out."""
        n_hold = int(round(len(self) * holdout_fraction))
        cut = len(self) - n_hold
        return (
            PairedDataset(self.sources[:cut], self.targets[:cut], self.norm, self.offsets[:cut]),
            PairedDataset(self.sources[cut:], self.targets[cut:], self.norm, self.offsets[cut:]),
        )


def enhancer_layers(window_len: int, hidden_width: int) -> list[FullyConnected]:
    tanh = Activation("tanh")
    return [
        FullyConnected(window_len, window_len, tanh),
        FullyConnected(window_len, hidden_width, tanh),
        FullyConnected(hidden_width, hidden_width, tanh),
        FullyConnected(hidden_width, window_len),
    ]


def expected_param_count(window_len: int, hidden_width: int) -> int:
    w, h = window_len, hidden_width
    return (w * w + w) + (w * h + h) + (h * h + h) + (h * w + w)


def build_enhancer(cfg: EnhancerConfig, dtype=np.float64) -> NetworkModel:
    model = NetworkModel.build(enhancer_layers(cfg.window_len, cfg.hidden_width), (cfg.window_len,), cfg.seed, dtype)
    assert model.num_params() == expected_param_count(cfg.window_len, cfg.hidden_width)
    log.info("enhancer built: %d parameters", model.num_params())
    return model


def make_paired_dataset(coarse: TimeSeries, fine: TimeSeries, n_pairs: int, window_len: int, seed: int) -> PairedDataset:
    """Cut ``n_pairs`` windows at shared random offsets from both series."""
    if len(coarse) != len(fine):
        raise ValidationError(f"coarse ({len(coarse)}) and fine ({len(fine)}) series differ in length")
    if n_pairs < 1:
        raise ValidationError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    offsets = np.array([random_offset(len(fine), window_len, rng) for _ in range(n_pairs)], dtype=np.int64)
    norm = fit_norm(np.concatenate([coarse.values, fine.values]))
    idx = offsets[:, None] + np.arange(window_len)[None, :]
    return PairedDataset(norm.apply(coarse.values[idx]), norm.apply(fine.values[idx]), norm, offsets)


def train_enhancer(model: NetworkModel, data: PairedDataset, cfg: EnhancerConfig) -> list[float]:
    """Mini-batch Adam on MSE. Returns the mean training loss of every epoch.

    The pair order is reshuffled each epoch from ``cfg.seed``; a trailing
    partial batch is dropped.
    """
    if data.window_len != model.input_shape[0]:
        raise ValidationError(f"dataset window {data.window_len} != model input {model.input_shape[0]}")
    if cfg.batch_size > len(data):
        raise ValidationError(f"batch_size {cfg.batch_size} exceeds dataset size {len(data)}")
    rng = np.random.default_rng([cfg.seed, 1])
    dtype = model.dtype
    x_all = data.sources.astype(dtype)
    y_all = data.targets.astype(dtype)
    n_batches = len(data) // cfg.batch_size
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            try:
                out, cache = model.forward(x_all[idx], training=True)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch + 1}: {exc}") from None
            loss, grad = mse_loss(out, y_all[idx])
            if not np.isfinite(loss):
                raise NumericError(f"epoch {epoch + 1}: non-finite loss")
            grads, _ = model.backward(cache, grad)
            adam_step(model, grads, cfg.adam)
            total += loss
        history.append(total / n_batches)
        log.debug("enhancer epoch %d loss %.6g", epoch + 1, history[-1])
    return history


def enhance(model: NetworkModel, coarse_window) -> np.ndarray:
    """One forward pass over a single normalized window (or a batch of them)."""
    x = np.asarray(coarse_window)
    single = x.ndim == 1
    if x.shape[-1] != model.input_shape[0]:
        raise ValidationError(f"window length {x.shape[-1]} != model window {model.input_shape[0]}")
    out = model.predict(x[None, :] if single else x)
    return out[0] if single else out


def enhance_series(model: NetworkModel, coarse: TimeSeries, norm: NormParams) -> TimeSeries:
    """Enhance a raw-unit coarse window; timestamps come from the input."""
    y = enhance(model, norm.apply(coarse.values))
    return coarse.with_values(norm.invert(y.astype(np.float64)))


def rmse(a, b) -> float:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.mean(d * d)))
