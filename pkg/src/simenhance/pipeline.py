"""End-to-end enhanced-simulation run, split into resumable stages.

All artifacts of a run live in ``<out>/<run_id>/``:

================  ==================================================================
stage             writes
================  ==================================================================
synth             goal.csv (clean signal), reference.csv (+ injected noise),
                  reference.lp (line protocol copy of reference.csv)
quantize          source.csv (coarse simulator output)
make-dataset      pairs.npz (normalized source/target windows, offsets, norm)
train-enhancer    enhancer.npz (checkpoint), enhancer_loss.csv, enhancer_eval.json
extract-noise     trend.csv, noise_real.csv, noise_windows.npz
train-gan         generator.npz, discriminator.npz, gan_metrics.csv, gan_eval.json
generate-noise    noise_generated.csv (``index,value``)
enhance           enhanced.csv, source_window.csv, goal_window.csv
combine           combined.csv (``timestamp,enhanced,noise,combined``)
================  ==================================================================

``stages.json`` tracks finished stages; ``manifest.json`` is written after the
last stage.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import store
from .config import STAGES, PipelineConfig, save_config
from .enhancer import (
    PairedDataset,
    build_enhancer,
    enhance_series,
    make_paired_dataset,
    rmse,
    train_enhancer,
)
from .errors import NotFoundError, SimEnhanceError, ValidationError
from .nn import NetworkModel, load_checkpoint, save_checkpoint
from .noise_gan import (
    NoiseDataset,
    build_discriminator,
    build_generator,
    generate_noise,
    make_noise_dataset,
    read_metrics_csv,
    train_gan,
    write_metrics_csv,
)
from .signal import (
    NormParams,
    TimeSeries,
    add_gaussian_noise,
    extract_noise,
    quantize,
    random_offset,
    synthesize,
)

log = logging.getLogger(__name__)

STAGE_OUTPUTS = {
    "synth": ("goal.csv", "reference.csv", "reference.lp"),
    "quantize": ("source.csv",),
    "make-dataset": ("pairs.npz",),
    "train-enhancer": ("enhancer.npz", "enhancer_loss.csv", "enhancer_eval.json"),
    "extract-noise": ("trend.csv", "noise_real.csv", "noise_windows.npz"),
    "train-gan": ("generator.npz", "discriminator.npz", "gan_metrics.csv", "gan_eval.json"),
    "generate-noise": ("noise_generated.csv",),
    "enhance": ("enhanced.csv", "source_window.csv", "goal_window.csv"),
    "combine": ("combined.csv",),
}


class StageError(SimEnhanceError):
    """Wraps the error that aborted a stage; ``cause`` keeps the original."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineHooks:
    """Optional instrumentation passed through to GAN training."""

    gan_callback: Callable[[str, int], None] | None = None
    gan_loss_fn: Callable | None = None
    gan_models: Callable[[NetworkModel, NetworkModel], None] | None = None  # sees (gen, disc) before training


@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    artifacts: dict[str, str]
    seeds: dict[str, int]
    master_seed: int
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


@dataclass
class CombinedOutput:
    enhanced: TimeSeries
    noise: TimeSeries
    combined: TimeSeries
    manifest: RunManifest | None = None


def combine(enhanced: TimeSeries, noise) -> TimeSeries:
    """Elementwise sum; timestamps come from ``enhanced``."""
    noise = np.asarray(noise.values if isinstance(noise, TimeSeries) else noise, dtype=np.float64)
    if noise.shape != (len(enhanced),):
        raise ValidationError(f"noise length {noise.shape[0] if noise.ndim else 0} != enhanced length {len(enhanced)}")
    return enhanced.with_values(enhanced.values + noise)


# ---------------------------------------------------------------- run directory

class RunDir:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.path = Path(cfg.io.out) / cfg.run_id
        self.config_hash = cfg.config_hash()

    def __truediv__(self, name: str) -> Path:
        return self.path / name

    def require(self, *names: str) -> None:
        for name in names:
            if not (self.path / name).exists():
                raise NotFoundError(f"missing artifact {self.path / name}; run the producing stage first")

    def _stages_file(self) -> Path:
        return self.path / "stages.json"

    def completed(self) -> dict:
        f = self._stages_file()
        return json.loads(f.read_text()) if f.exists() else {}

    def mark_done(self, stage: str) -> None:
        done = self.completed()
        done[stage] = {"config_hash": self.config_hash, "outputs": list(STAGE_OUTPUTS[stage])}
        self._stages_file().write_text(json.dumps(done, indent=2, sort_keys=True))

    def is_done(self, stage: str) -> bool:
        entry = self.completed().get(stage)
        return (
            entry is not None
            and entry.get("config_hash") == self.config_hash
            and all((self.path / n).exists() for n in STAGE_OUTPUTS[stage])
        )

    def write_series(self, name: str, series: TimeSeries) -> None:
        store.write_series_csv(series, self.path / name, timestamps=self.cfg.io.csv_timestamps)

    def read_series(self, name: str) -> TimeSeries:
        self.require(name)
        return store.read_series_csv(self.path / name, default_interval=self.cfg.signal.sample_interval)


def _norm_to_array(n: NormParams) -> np.ndarray:
    return np.array([n.src_min, n.src_max, n.lo, n.hi, float(n.degenerate)])


def _norm_from_array(a: np.ndarray) -> NormParams:
    return NormParams(float(a[0]), float(a[1]), float(a[2]), float(a[3]), bool(a[4]))


def load_pairs(run: RunDir) -> PairedDataset:
    run.require("pairs.npz")
    with np.load(run / "pairs.npz") as z:
        return PairedDataset(z["sources"], z["targets"], _norm_from_array(z["norm"]), z["offsets"])


def write_vector_csv(values, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("index", "value"))
        for i, v in enumerate(np.asarray(values, dtype=np.float64).tolist()):
            w.writerow((i, repr(v)))


def read_vector_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != ("index", "value"):
        raise store.ParseError(f"{path}: expected header index,value", line=1)
    return np.array([float(r[1]) for r in rows[1:]])


# ---------------------------------------------------------------- stages

def stage_synth(run: RunDir) -> None:
    cfg = run.cfg
    goal = synthesize(cfg.signal)
    reference = add_gaussian_noise(goal, cfg.noise_injection.sigma, cfg.seeds.for_stage("synth"))
    run.write_series("goal.csv", goal)
    run.write_series("reference.csv", reference)
    store.write_line_protocol(reference, "telemetry", {"source": "reference"}, "value", run / "reference.lp")


def stage_quantize(run: RunDir) -> None:
    goal = run.read_series("goal.csv")
    run.write_series("source.csv", quantize(goal, run.cfg.quantizer.resolve(goal)))


def stage_make_dataset(run: RunDir) -> None:
    cfg = run.cfg
    goal, source = run.read_series("goal.csv"), run.read_series("source.csv")
    ds = make_paired_dataset(source, goal, cfg.dataset.n_pairs, cfg.enhancer.window_len,
                             cfg.seeds.for_stage("make-dataset"))
    with open(run / "pairs.npz", "wb") as fh:
        np.savez(fh, sources=ds.sources, targets=ds.targets, offsets=ds.offsets, norm=_norm_to_array(ds.norm))


def stage_train_enhancer(run: RunDir) -> None:
    cfg = run.cfg
    ecfg = replace(cfg.enhancer, seed=cfg.seeds.for_stage("train-enhancer"))
    train, held = load_pairs(run).split(ecfg.holdout_fraction)
    model = build_enhancer(ecfg)
    history = train_enhancer(model, train, ecfg)
    save_checkpoint(model, run / "enhancer.npz", run.config_hash)
    with open(run / "enhancer_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("epoch", "loss"))
        for i, loss in enumerate(history, start=1):
            w.writerow((i, repr(loss)))
    held_rmse = rmse(model.predict(held.sources), held.targets) if len(held) else None
    train_rmse = rmse(model.predict(train.sources), train.targets)
    (run / "enhancer_eval.json").write_text(json.dumps(
        {"heldout_rmse": held_rmse, "train_rmse": train_rmse, "n_train": len(train), "n_heldout": len(held),
         "parameters": model.num_params()}, indent=2))


def stage_extract_noise(run: RunDir) -> None:
    cfg = run.cfg
    reference = run.read_series("reference.csv")
    trend, noise = extract_noise(reference, cfg.ma_window)
    run.write_series("trend.csv", trend)
    run.write_series("noise_real.csv", noise)
    ds = make_noise_dataset(noise, cfg.dataset.n_noise_windows, cfg.gan.sample_len, cfg.seeds.for_stage("extract-noise"))
    with open(run / "noise_windows.npz", "wb") as fh:
        np.savez(fh, windows=ds.windows, offsets=ds.offsets)


def gan_config_for(run: RunDir, real_noise: TimeSeries):
    cfg = run.cfg
    return replace(cfg.gan, seed=cfg.seeds.for_stage("train-gan")).with_noise_scale_for(float(real_noise.values.std()))


def stage_train_gan(run: RunDir, hooks: PipelineHooks | None = None) -> None:
    run.require("noise_windows.npz")
    with np.load(run / "noise_windows.npz") as z:
        data = NoiseDataset(z["windows"], z["offsets"])
    real = run.read_series("noise_real.csv")
    gcfg = gan_config_for(run, real)
    gen, disc = build_generator(gcfg), build_discriminator(gcfg)
    hooks = hooks or PipelineHooks()
    if hooks.gan_models:
        hooks.gan_models(gen, disc)
    extra = {"loss_fn": hooks.gan_loss_fn} if hooks.gan_loss_fn else {}
    records = train_gan(gen, disc, data, gcfg, callback=hooks.gan_callback, **extra)
    save_checkpoint(gen, run / "generator.npz", run.config_hash)
    save_checkpoint(disc, run / "discriminator.npz", run.config_hash)
    write_metrics_csv(records, run / "gan_metrics.csv")
    (run / "gan_eval.json").write_text(json.dumps(
        {"noise_scale": gcfg.noise_scale, "real_std": float(real.values.std()),
         "real_mean": float(real.values.mean())}, indent=2))


def stage_generate_noise(run: RunDir) -> None:
    run.require("generator.npz")
    gen, _ = load_checkpoint(run / "generator.npz")
    noise = generate_noise(gen, 1, run.cfg.seeds.for_stage("generate-noise"))[0]
    write_vector_csv(noise, run / "noise_generated.csv")


def stage_enhance(run: RunDir) -> None:
    cfg = run.cfg
    run.require("enhancer.npz")
    source, goal = run.read_series("source.csv"), run.read_series("goal.csv")
    norm = load_pairs(run).norm
    model, _ = load_checkpoint(run / "enhancer.npz")
    rng = np.random.default_rng(cfg.seeds.for_stage("enhance"))
    off = random_offset(len(source), cfg.enhancer.window_len, rng)
    window = source.slice(off, cfg.enhancer.window_len)
    run.write_series("source_window.csv", window)
    run.write_series("goal_window.csv", goal.slice(off, cfg.enhancer.window_len))
    run.write_series("enhanced.csv", enhance_series(model, window, norm))


def stage_combine(run: RunDir) -> None:
    enhanced = run.read_series("enhanced.csv")
    run.require("noise_generated.csv")
    noise = read_vector_csv(run / "noise_generated.csv")
    combined = combine(enhanced, noise)
    # exact, not approximate
    assert np.array_equal(combined.values, enhanced.values + noise)
    with open(run / "combined.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("timestamp", "enhanced", "noise", "combined"))
        fmt = store.format_iso_ns if run.cfg.io.csv_timestamps == "iso" else str
        for ts, e, n, c in zip(combined.timestamps_ns().tolist(), enhanced.values.tolist(),
                               noise.tolist(), combined.values.tolist()):
            w.writerow((fmt(ts), repr(e), repr(n), repr(c)))


STAGE_FUNCS: dict[str, Callable[[RunDir], None]] = {
    "synth": stage_synth,
    "quantize": stage_quantize,
    "make-dataset": stage_make_dataset,
    "train-enhancer": stage_train_enhancer,
    "extract-noise": stage_extract_noise,
    "train-gan": stage_train_gan,
    "generate-noise": stage_generate_noise,
    "enhance": stage_enhance,
    "combine": stage_combine,
}
assert tuple(STAGE_FUNCS) == STAGES


def run_stage(cfg: PipelineConfig, stage: str, resume: bool = False, hooks: PipelineHooks | None = None) -> RunDir:
    if stage not in STAGE_FUNCS:
        raise ValidationError(f"unknown stage {stage!r}")
    run = RunDir(cfg)
    run.path.mkdir(parents=True, exist_ok=True)
    if not (run / "config.ini").exists():
        save_config(cfg, run / "config.ini")
    if resume and run.is_done(stage):
        log.info("stage %s already complete, skipping", stage)
        return run
    log.info("stage %s", stage)
    try:
        if stage == "train-gan":
            stage_train_gan(run, hooks)
        else:
            STAGE_FUNCS[stage](run)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc
    run.mark_done(stage)
    return run


def load_combined(run_dir: Path) -> CombinedOutput:
    with open(Path(run_dir) / "combined.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    stamps = [store.parse_timestamp(r[0]) for r in rows]
    interval = stamps[1] - stamps[0] if len(stamps) > 1 else 1
    cols = np.array([[float(v) for v in r[1:]] for r in rows])
    mk = lambda k: TimeSeries.from_ns(stamps[0], interval, cols[:, k])  # noqa: E731
    return CombinedOutput(mk(0), mk(1), mk(2))


def run_pipeline(cfg: PipelineConfig, resume: bool = False,
                 hooks: PipelineHooks | None = None) -> tuple[CombinedOutput, RunManifest]:
    """Run every stage in order and write ``manifest.json`` last."""
    run = RunDir(cfg)
    seconds = {}
    for stage in STAGES:
        t0 = time.perf_counter()
        run_stage(cfg, stage, resume=resume, hooks=hooks)
        seconds[stage] = round(time.perf_counter() - t0, 3)
    artifacts = {}
    for stage in STAGES:
        for name in STAGE_OUTPUTS[stage]:
            if not (run / name).exists():
                raise NotFoundError(f"artifact {name} missing after stage {stage}")
            artifacts[name] = str(run / name)
    manifest = RunManifest(
        run_id=cfg.run_id,
        config_hash=run.config_hash,
        artifacts=artifacts,
        seeds={s: cfg.seeds.for_stage(s) for s in STAGES},
        master_seed=cfg.seeds.master,
        stage_seconds=seconds,
    )
    (run / "manifest.json").write_text(manifest.to_json())
    out = load_combined(run.path)
    out.manifest = manifest
    return out, manifest


# ---------------------------------------------------------------- plot data

PLOT_VIEWS = ("goal", "source", "enhanced", "noise_real", "noise_generated", "combined", "gan_metrics", "loss_history")


def _series_rows(series: TimeSeries):
    t0 = series.start_ns
    return (("time_s", "value"),
            [((ts - t0) / 1e9, v) for ts, v in zip(series.timestamps_ns().tolist(), series.values.tolist())])


def emit_plot_data(run_dir, which=PLOT_VIEWS) -> dict[str, Path]:
    """Write ``<run_dir>/plots/<view>.csv`` for each requested view.

    Columns: series views ``time_s,value`` (seconds from the series start);
    ``noise_generated`` ``index,value``; ``combined`` ``time_s,enhanced,combined``;
    ``gan_metrics`` ``step,acc_real,acc_fake,loss_d,loss_g``; ``loss_history``
    ``epoch,loss``.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise NotFoundError(f"no such run: {run_dir}")
    if isinstance(which, str):
        which = (which,)
    out_dir = run_dir / "plots"
    out_dir.mkdir(exist_ok=True)
    written = {}

    def need(name):
        p = run_dir / name
        if not p.exists():
            raise NotFoundError(f"run {run_dir.name} has no {name}")
        return p

    for view in which:
        if view not in PLOT_VIEWS:
            raise ValidationError(f"unknown plot view {view!r}; choose from {', '.join(PLOT_VIEWS)}")
        if view in ("goal", "source", "enhanced", "noise_real"):
            header, rows = _series_rows(store.read_series_csv(need(f"{view}.csv")))
        elif view == "noise_generated":
            vals = read_vector_csv(need("noise_generated.csv"))
            header, rows = ("index", "value"), list(enumerate(vals.tolist()))
        elif view == "combined":
            c = load_combined(need("combined.csv").parent)
            t0 = c.combined.start_ns
            header = ("time_s", "enhanced", "combined")
            rows = [((ts - t0) / 1e9, e, v) for ts, e, v in
                    zip(c.combined.timestamps_ns().tolist(), c.enhanced.values.tolist(), c.combined.values.tolist())]
        elif view == "gan_metrics":
            header = ("step", "acc_real", "acc_fake", "loss_d", "loss_g")
            rows = [(r.step, r.acc_real, r.acc_fake, r.loss_discriminator, r.loss_generator)
                    for r in read_metrics_csv(need("gan_metrics.csv"))]
        else:
            with open(need("enhancer_loss.csv"), newline="") as fh:
                data = list(csv.reader(fh))
            header, rows = tuple(data[0]), data[1:]
        path = out_dir / f"{view}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        written[view] = path
    return written
