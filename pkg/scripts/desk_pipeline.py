"""Full default pipeline run followed by plot-data export.

    python scripts/desk_pipeline.py --out runs --seed 0
"""
import argparse
import json

from simenhance.config import PipelineConfig, load_config
from simenhance.pipeline import RunDir, emit_plot_data, run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    cfg = (load_config(args.config) if args.config else PipelineConfig()).with_overrides(seed=args.seed, out=args.out)

    out, manifest = run_pipeline(cfg)
    run = RunDir(cfg)
    ev = json.loads((run / "enhancer_eval.json").read_text())
    print(f"run {manifest.run_id} in {run.path}")
    for stage, secs in manifest.stage_seconds.items():
        print(f"  {stage:<15s} {secs:8.2f}s")
    print(f"enhancer held-out RMSE {ev['heldout_rmse']:.4f} (normalized units)")
    print(f"combined window: {len(out.combined)} samples, noise std {out.noise.values.std():.4f}")
    for path in emit_plot_data(run.path).values():
        print(f"  wrote {path}")


if __name__ == "__main__":
    main()
