"""Pipeline configuration and its INI-style file format.

Every section and key is listed in :data:`SCHEMA`; anything else in a config
file is an error. ``auto`` is accepted where the schema default is ``auto``.
Example (all defaults)::

    [signal]
    components = 480:1.0:0.0, 120:0.35:0.0   ; period_s:amplitude:phase_rad, ...
    offset = 0.0
    sample_interval = 1.0
    num_samples = 2000
    start_time = 0.0

    [quantizer]
    levels = 8
    min_value = auto                       ; auto = signal minimum
    max_value = auto

    [noise_injection]
    kind = gaussian
    sigma = 0.05

    [extraction]
    ma_window = 11

    [enhancer]
    window_len = 500
    hidden_width = 3200
    epochs = 40
    batch_size = 15
    learning_rate = 0.001
    beta1 = 0.9
    beta2 = 0.999
    epsilon = 1e-08
    holdout_fraction = 0.1

    [gan]
    latent_dim = 16
    generator_hidden = 64
    sample_len = 500
    iterations = 1000
    batch_size = 200
    metric_interval = 100
    learning_rate = 0.0002
    beta1 = 0.5
    beta2 = 0.999
    epsilon = 1e-08
    noise_scale = auto                     ; auto = noise_scale_factor * real-noise std
    noise_scale_factor = 3.0

    [dataset]
    n_pairs = 200
    n_noise_windows = 200

    [seeds]
    master = 0
    ; optional per-stage overrides, e.g. train-gan = 7

    [io]
    out = runs
    run_id = auto                          ; auto = derived from the config hash
    csv_timestamps = iso                   ; iso or ns
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

from .enhancer import EnhancerConfig
from .errors import ValidationError
from .nn import AdamConfig
from .noise_gan import GanConfig
from .signal import QuantizerSpec, SignalSpec, SineComponent, TimeSeries

STAGES = (
    "synth",
    "quantize",
    "make-dataset",
    "train-enhancer",
    "extract-noise",
    "train-gan",
    "generate-noise",
    "enhance",
    "combine",
)


def stage_seed(master: int, stage: str) -> int:
    """Seed for one stage: the first 8 bytes (little endian) of sha256("<master>/<stage>")."""
    digest = hashlib.sha256(f"{int(master)}/{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class QuantizerSettings:
    levels: int = 8
    min_value: float | None = None
    max_value: float | None = None

    def resolve(self, series: TimeSeries) -> QuantizerSpec:
        lo = float(series.values.min()) if self.min_value is None else self.min_value
        hi = float(series.values.max()) if self.max_value is None else self.max_value
        return QuantizerSpec(self.levels, lo, hi)


@dataclass(frozen=True)
class NoiseInjection:
    kind: str = "gaussian"
    sigma: float = 0.05

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValidationError(f"unsupported noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValidationError("noise sigma must be >= 0")


@dataclass(frozen=True)
class DatasetSizes:
    n_pairs: int = 200
    n_noise_windows: int = 200


@dataclass(frozen=True)
class Seeds:
    master: int = 0
    overrides: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.overrides) - set(STAGES)
        if unknown:
            raise ValidationError(f"unknown stage(s) in [seeds]: {', '.join(sorted(unknown))}")

    def for_stage(self, stage: str) -> int:
        if stage in self.overrides:
            return int(self.overrides[stage])
        return stage_seed(self.master, stage)


@dataclass(frozen=True)
class IOConfig:
    out: str = "runs"
    run_id: str | None = None
    csv_timestamps: str = "iso"

    def __post_init__(self):
        if self.csv_timestamps not in ("iso", "ns"):
            raise ValidationError("csv_timestamps must be iso or ns")


def default_signal() -> SignalSpec:
    return SignalSpec((SineComponent(480.0, 1.0, 0.0), SineComponent(120.0, 0.35, 0.0)))


@dataclass(frozen=True)
class PipelineConfig:
    signal: SignalSpec = field(default_factory=default_signal)
    quantizer: QuantizerSettings = field(default_factory=QuantizerSettings)
    noise_injection: NoiseInjection = field(default_factory=NoiseInjection)
    ma_window: int = 11
    enhancer: EnhancerConfig = field(default_factory=EnhancerConfig)
    gan: GanConfig = field(default_factory=GanConfig)
    dataset: DatasetSizes = field(default_factory=DatasetSizes)
    seeds: Seeds = field(default_factory=Seeds)
    io: IOConfig = field(default_factory=IOConfig)

    def __post_init__(self):
        if self.ma_window < 1 or self.ma_window % 2 == 0:
            raise ValidationError(f"ma_window must be odd and positive, got {self.ma_window}")
        if self.enhancer.window_len > self.signal.num_samples:
            raise ValidationError("enhancer window_len exceeds signal num_samples")
        if self.gan.sample_len > self.signal.num_samples:
            raise ValidationError("gan sample_len exceeds signal num_samples")

    def config_hash(self) -> str:
        """sha256 of the canonical text form, excluding the [io] section."""
        return hashlib.sha256(dumps(self, include_io=False).encode()).hexdigest()

    @property
    def run_id(self) -> str:
        return self.io.run_id or f"run-{self.config_hash()[:12]}"

    def with_overrides(self, seed: int | None = None, out: str | None = None) -> "PipelineConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seeds=replace(cfg.seeds, master=int(seed)))
        if out is not None:
            cfg = replace(cfg, io=replace(cfg.io, out=str(out)))
        return cfg


# ---------------------------------------------------------------- file format

def _auto(v):
    return "auto" if v is None else v


def _sections(cfg: PipelineConfig) -> dict[str, dict[str, object]]:
    s, e, g = cfg.signal, cfg.enhancer, cfg.gan
    return {
        "signal": {
            "components": ", ".join(f"{c.period!r}:{c.amplitude!r}:{c.phase!r}" for c in s.components),
            "offset": s.offset,
            "sample_interval": s.sample_interval,
            "num_samples": s.num_samples,
            "start_time": s.start_time,
        },
        "quantizer": {
            "levels": cfg.quantizer.levels,
            "min_value": _auto(cfg.quantizer.min_value),
            "max_value": _auto(cfg.quantizer.max_value),
        },
        "noise_injection": {"kind": cfg.noise_injection.kind, "sigma": cfg.noise_injection.sigma},
        "extraction": {"ma_window": cfg.ma_window},
        "enhancer": {
            "window_len": e.window_len, "hidden_width": e.hidden_width, "epochs": e.epochs,
            "batch_size": e.batch_size, "learning_rate": e.adam.learning_rate, "beta1": e.adam.beta1,
            "beta2": e.adam.beta2, "epsilon": e.adam.epsilon, "holdout_fraction": e.holdout_fraction,
        },
        "gan": {
            "latent_dim": g.latent_dim, "generator_hidden": g.generator_hidden, "sample_len": g.sample_len,
            "iterations": g.iterations, "batch_size": g.batch_size, "metric_interval": g.metric_interval,
            "learning_rate": g.adam.learning_rate, "beta1": g.adam.beta1, "beta2": g.adam.beta2,
            "epsilon": g.adam.epsilon, "noise_scale": _auto(g.noise_scale),
            "noise_scale_factor": g.noise_scale_factor,
        },
        "dataset": {"n_pairs": cfg.dataset.n_pairs, "n_noise_windows": cfg.dataset.n_noise_windows},
        "seeds": {"master": cfg.seeds.master, **dict(sorted(cfg.seeds.overrides.items()))},
        "io": {"out": cfg.io.out, "run_id": _auto(cfg.io.run_id), "csv_timestamps": cfg.io.csv_timestamps},
    }


SCHEMA: dict[str, tuple[str, ...]] = {
    name: tuple(keys) for name, keys in _sections(PipelineConfig()).items()
}


def dumps(cfg: PipelineConfig, include_io: bool = True) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for name, values in _sections(cfg).items():
        if name == "io" and not include_io:
            continue
        parser[name] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in values.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def save_config(cfg: PipelineConfig, path) -> Path:
    path = Path(path)
    path.write_text(dumps(cfg))
    return path


def _num(section: str, key: str, raw: str, kind):
    try:
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ValidationError(f"[{section}] {key}: expected {kind.__name__}, got {raw!r}") from None


def _opt_float(section: str, key: str, raw: str) -> float | None:
    return None if raw.strip().lower() == "auto" else _num(section, key, raw, float)


def _components(raw: str) -> tuple[SineComponent, ...]:
    comps = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if not 1 <= len(parts) <= 3:
            raise ValidationError(f"[signal] components: bad entry {item!r} (want period:amplitude:phase)")
        nums = [_num("signal", "components", p, float) for p in parts]
        comps.append(SineComponent(*nums))
    return tuple(comps)


def loads(text: str) -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config syntax error: {exc}") from None
    raw: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ValidationError(f"unknown config section [{section}]")
        keys = dict(parser[section])
        allowed = set(SCHEMA[section]) | (set(STAGES) if section == "seeds" else set())
        unknown = set(keys) - allowed
        if unknown:
            raise ValidationError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
        raw[section] = keys
    d = PipelineConfig()

    def get(section, key, kind, default):
        if key not in raw.get(section, {}):
            return default
        return _num(section, key, raw[section][key], kind)

    sig = raw.get("signal", {})
    signal = SignalSpec(
        components=_components(sig["components"]) if "components" in sig else d.signal.components,
        offset=get("signal", "offset", float, d.signal.offset),
        sample_interval=get("signal", "sample_interval", float, d.signal.sample_interval),
        num_samples=get("signal", "num_samples", int, d.signal.num_samples),
        start_time=get("signal", "start_time", float, d.signal.start_time),
    )
    q = raw.get("quantizer", {})
    quantizer = QuantizerSettings(
        levels=get("quantizer", "levels", int, d.quantizer.levels),
        min_value=_opt_float("quantizer", "min_value", q["min_value"]) if "min_value" in q else None,
        max_value=_opt_float("quantizer", "max_value", q["max_value"]) if "max_value" in q else None,
    )
    noise = NoiseInjection(
        kind=raw.get("noise_injection", {}).get("kind", d.noise_injection.kind).strip(),
        sigma=get("noise_injection", "sigma", float, d.noise_injection.sigma),
    )
    e = d.enhancer
    enhancer = EnhancerConfig(
        window_len=get("enhancer", "window_len", int, e.window_len),
        hidden_width=get("enhancer", "hidden_width", int, e.hidden_width),
        epochs=get("enhancer", "epochs", int, e.epochs),
        batch_size=get("enhancer", "batch_size", int, e.batch_size),
        adam=AdamConfig(
            get("enhancer", "learning_rate", float, e.adam.learning_rate),
            get("enhancer", "beta1", float, e.adam.beta1),
            get("enhancer", "beta2", float, e.adam.beta2),
            get("enhancer", "epsilon", float, e.adam.epsilon),
        ),
        holdout_fraction=get("enhancer", "holdout_fraction", float, e.holdout_fraction),
    )
    g = d.gan
    graw = raw.get("gan", {})
    gan = GanConfig(
        latent_dim=get("gan", "latent_dim", int, g.latent_dim),
        generator_hidden=get("gan", "generator_hidden", int, g.generator_hidden),
        sample_len=get("gan", "sample_len", int, g.sample_len),
        iterations=get("gan", "iterations", int, g.iterations),
        batch_size=get("gan", "batch_size", int, g.batch_size),
        metric_interval=get("gan", "metric_interval", int, g.metric_interval),
        adam=AdamConfig(
            get("gan", "learning_rate", float, g.adam.learning_rate),
            get("gan", "beta1", float, g.adam.beta1),
            get("gan", "beta2", float, g.adam.beta2),
            get("gan", "epsilon", float, g.adam.epsilon),
        ),
        noise_scale=_opt_float("gan", "noise_scale", graw["noise_scale"]) if "noise_scale" in graw else None,
        noise_scale_factor=get("gan", "noise_scale_factor", float, g.noise_scale_factor),
    )
    dataset = DatasetSizes(
        n_pairs=get("dataset", "n_pairs", int, d.dataset.n_pairs),
        n_noise_windows=get("dataset", "n_noise_windows", int, d.dataset.n_noise_windows),
    )
    sraw = raw.get("seeds", {})
    seeds = Seeds(
        master=get("seeds", "master", int, d.seeds.master),
        overrides={k: _num("seeds", k, v, int) for k, v in sraw.items() if k != "master"},
    )
    iraw = raw.get("io", {})
    run_id = iraw.get("run_id", "auto").strip()
    io_cfg = IOConfig(
        out=iraw.get("out", d.io.out).strip(),
        run_id=None if run_id.lower() == "auto" else run_id,
        csv_timestamps=iraw.get("csv_timestamps", d.io.csv_timestamps).strip(),
    )
    return PipelineConfig(signal, quantizer, noise, get("extraction", "ma_window", int, d.ma_window),
                          enhancer, gan, dataset, seeds, io_cfg)


def load_config(path) -> PipelineConfig:
    return loads(Path(path).read_text())
