"""GAN that learns the distribution of extracted telemetry noise.

Training alternates two passes per iteration:

1. discriminator pass: half a batch of real windows (label 1.0) and half a
   batch of generated windows (label 0.0); only the discriminator is updated;
2. generator pass: the discriminator is frozen and a full batch of generated
   windows is scored with the labels flipped to 1.0; the error backpropagates
   through the frozen discriminator into the generator.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NumericError, ParseError, ValidationError
from .nn import (
    Activation,
    AdamConfig,
    BatchNorm,
    Conv1D,
    Flatten,
    FullyConnected,
    MaxPool1D,
    NetworkModel,
    Reshape,
    adam_step,
    bce_loss,
    leaky_relu,
)
from .signal import TimeSeries, random_offset

log = logging.getLogger(__name__)

CONV_FILTERS = 4
CONV_WINDOW = 20
CONV_STRIDE = 4
POOL_WIDTH = 4
HEAD_WIDTHS = (32, 8)
SLOPE = 0.2


@dataclass(frozen=True)
class GanConfig:
    latent_dim: int = 16
    generator_hidden: int = 64
    sample_len: int = 500
    iterations: int = 1000
    batch_size: int = 200
    metric_interval: int = 100
    adam: AdamConfig = field(default_factory=lambda: AdamConfig(learning_rate=2e-4, beta1=0.5))
    seed: int = 0
    # None: resolved by the caller, 3x the real-noise std by default
    noise_scale: float | None = None
    noise_scale_factor: float = 3.0

    def __post_init__(self):
        for name in ("latent_dim", "generator_hidden", "sample_len", "batch_size", "metric_interval"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")
        if self.batch_size % 2:
            raise ValidationError(f"batch_size must be even, got {self.batch_size}")
        if self.iterations % self.metric_interval:
            raise ValidationError("metric_interval must divide iterations")
        if self.noise_scale is not None and not self.noise_scale > 0:
            raise ValidationError("noise_scale must be > 0")

    def with_noise_scale_for(self, real_std: float) -> "GanConfig":
        if self.noise_scale is not None:
            return self
        return replace(self, noise_scale=float(self.noise_scale_factor * real_std))


@dataclass(frozen=True)
class GanMetricsRecord:
    step: int
    acc_real: float
    acc_fake: float
    loss_discriminator: float
    loss_generator: float


@dataclass
class NoiseDataset:
    windows: np.ndarray  # (n_windows, sample_len)
    offsets: np.ndarray

    @property
    def sample_len(self) -> int:
        return self.windows.shape[1]

    def __len__(self) -> int:
        return self.windows.shape[0]


def make_noise_dataset(noise: TimeSeries, n_windows: int, sample_len: int, seed: int) -> NoiseDataset:
    if n_windows < 1:
        raise ValidationError("n_windows must be >= 1")
    rng = np.random.default_rng(seed)
    offsets = np.array([random_offset(len(noise), sample_len, rng) for _ in range(n_windows)], dtype=np.int64)
    idx = offsets[:, None] + np.arange(sample_len)[None, :]
    return NoiseDataset(noise.values[idx].copy(), offsets)


def build_generator(cfg: GanConfig) -> NetworkModel:
    scale = cfg.noise_scale if cfg.noise_scale is not None else 1.0
    layers = [
        FullyConnected(cfg.latent_dim, cfg.generator_hidden, leaky_relu(SLOPE)),
        BatchNorm(cfg.generator_hidden, momentum=0.9),
        FullyConnected(cfg.generator_hidden, cfg.sample_len, Activation("tanh", scale)),
        Reshape((cfg.sample_len,)),
    ]
    return NetworkModel.build(layers, (cfg.latent_dim,), seed=cfg.seed)


def build_discriminator(cfg: GanConfig) -> NetworkModel:
    if cfg.sample_len < CONV_WINDOW:
        raise ValidationError(f"sample_len {cfg.sample_len} is shorter than the conv window {CONV_WINDOW}")
    positions = (cfg.sample_len - CONV_WINDOW) // CONV_STRIDE + 1
    if positions < POOL_WIDTH:
        raise ValidationError(f"sample_len {cfg.sample_len} too short for pooling width {POOL_WIDTH}")
    flat = CONV_FILTERS * (positions // POOL_WIDTH)
    layers = [
        Reshape((1, cfg.sample_len)),
        Conv1D(1, CONV_FILTERS, CONV_WINDOW, CONV_STRIDE, leaky_relu(SLOPE)),
        MaxPool1D(POOL_WIDTH),
        Flatten(),
        FullyConnected(flat, HEAD_WIDTHS[0], leaky_relu(SLOPE)),
        FullyConnected(HEAD_WIDTHS[0], HEAD_WIDTHS[1], leaky_relu(SLOPE)),
        FullyConnected(HEAD_WIDTHS[1], 1, Activation("sigmoid")),
    ]
    # separate stream from the generator so both nets are not initialized alike
    return NetworkModel.build(layers, (cfg.sample_len,), seed=[cfg.seed, 1])


def is_imbalanced(rec: GanMetricsRecord, first_loss_g: float) -> bool:
    """Perfect discriminator while the generator loss has grown tenfold."""
    return rec.acc_real == 1.0 and rec.acc_fake == 1.0 and rec.loss_generator > 10 * first_loss_g


def train_gan(
    gen: NetworkModel,
    disc: NetworkModel,
    data: NoiseDataset,
    cfg: GanConfig,
    loss_fn: Callable = bce_loss,
    callback: Callable[[str, int], None] | None = None,
) -> list[GanMetricsRecord]:
    """Alternating discriminator/generator training.

    ``loss_fn`` and ``callback`` exist for instrumentation: ``callback`` is
    invoked with ``("d_start" | "d_end" | "g_start" | "g_end", step)`` around
    each pass.
    """
    half = cfg.batch_size // 2
    if len(data) < half:
        raise ValidationError(f"need at least {half} real windows, got {len(data)}")
    if data.sample_len != cfg.sample_len:
        raise ValidationError(f"noise windows have length {data.sample_len}, config says {cfg.sample_len}")
    rng = np.random.default_rng([cfg.seed, 2])
    notify = callback or (lambda phase, step: None)
    ones_half = np.ones((half, 1))
    labels_d = np.concatenate([ones_half, np.zeros((half, 1))])
    labels_g = np.ones((cfg.batch_size, 1))
    records: list[GanMetricsRecord] = []
    first_loss_g = None

    for step in range(1, cfg.iterations + 1):
        notify("d_start", step)
        real = data.windows[rng.integers(0, len(data), half)]
        z = rng.standard_normal((half, cfg.latent_dim))
        fake, _ = gen.forward(z, training=True, update_stats=False)
        scores, cache = disc.forward(np.concatenate([real, fake]), training=True)
        loss_d, grad = loss_fn(scores, labels_d)
        if not np.isfinite(loss_d):
            raise NumericError(f"step {step}: non-finite discriminator loss")
        grads, _ = disc.backward(cache, grad)
        adam_step(disc, grads, cfg.adam)
        notify("d_end", step)

        notify("g_start", step)
        saved_mask = list(disc.trainable)
        disc.set_trainable(False)
        try:
            z = rng.standard_normal((cfg.batch_size, cfg.latent_dim))
            fake, gen_cache = gen.forward(z, training=True)
            scores_g, disc_cache = disc.forward(fake, training=True)
            loss_g, grad = loss_fn(scores_g, labels_g)
            if not np.isfinite(loss_g):
                raise NumericError(f"step {step}: non-finite generator loss")
            _, dfake = disc.backward(disc_cache, grad)
            ggrads, _ = gen.backward(gen_cache, dfake)
            adam_step(gen, ggrads, cfg.adam)
        finally:
            disc.trainable = saved_mask
        notify("g_end", step)

        if first_loss_g is None:
            first_loss_g = loss_g
        if step % cfg.metric_interval == 0:
            rec = GanMetricsRecord(
                step=step,
                acc_real=float(np.mean(scores[:half] > 0.5)),
                acc_fake=float(np.mean(scores[half:] < 0.5)),
                loss_discriminator=float(loss_d),
                loss_generator=float(loss_g),
            )
            records.append(rec)
            log.info("gan step %d: acc_real %.2f acc_fake %.2f loss_d %.4f loss_g %.4f",
                     step, rec.acc_real, rec.acc_fake, rec.loss_discriminator, rec.loss_generator)
            if is_imbalanced(rec, first_loss_g):
                warnings.warn(f"GAN imbalance at step {step}: discriminator is perfect and "
                              f"generator loss {rec.loss_generator:.3g} exceeds 10x its initial value",
                              RuntimeWarning, stacklevel=2)
    return records


def generate_noise(gen: NetworkModel, count: int, seed: int) -> np.ndarray:
    """``count`` noise windows from standard-normal latent draws (inference mode)."""
    if count < 1:
        raise ValidationError(f"count must be positive, got {count}")
    z = np.random.default_rng(seed).standard_normal((count, gen.input_shape[0]))
    return gen.predict(z).reshape(count, -1)


METRIC_COLUMNS = ("step", "acc_real", "acc_fake", "loss_d", "loss_g")


def write_metrics_csv(records: list[GanMetricsRecord], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for r in records:
            w.writerow([r.step, repr(r.acc_real), repr(r.acc_fake),
                        repr(r.loss_discriminator), repr(r.loss_generator)])
    return path


def read_metrics_csv(path) -> list[GanMetricsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != METRIC_COLUMNS:
        raise ParseError(f"{path}: expected header {','.join(METRIC_COLUMNS)}", line=1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            out.append(GanMetricsRecord(int(row[0]), *(float(v) for v in row[1:5])))
        except (ValueError, IndexError, TypeError) as exc:
            raise ParseError(str(exc), line=lineno) from None
    return out


def metrics_to_dicts(records) -> list[dict]:
    return [asdict(r) for r in records]
