"""Desk-scale enhancer runs: held-out RMSE per seed.

    python scripts/enhancer_reference.py --seeds 0 1 2 --lr 1e-3
"""
import argparse
import time
from dataclasses import replace

from simenhance.config import PipelineConfig
from simenhance.enhancer import build_enhancer, enhance, make_paired_dataset, rmse, train_enhancer
from simenhance.nn import AdamConfig
from simenhance.signal import quantize, synthesize


def run(seed, lr, epochs):
    base = PipelineConfig()
    goal = synthesize(base.signal)
    source = quantize(goal, base.quantizer.resolve(goal))
    ds = make_paired_dataset(source, goal, base.dataset.n_pairs, base.enhancer.window_len, seed=seed)
    train, held = ds.split(base.enhancer.holdout_fraction)
    cfg = replace(base.enhancer, seed=seed, epochs=epochs, adam=replace(base.enhancer.adam, learning_rate=lr))
    model = build_enhancer(cfg)
    t0 = time.perf_counter()
    history = train_enhancer(model, train, cfg)
    baseline = rmse(held.sources, held.targets)
    return history, rmse(enhance(model, held.sources), held.targets), baseline, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--lr", type=float, default=AdamConfig().learning_rate)
    ap.add_argument("--epochs", type=int, default=PipelineConfig().enhancer.epochs)
    args = ap.parse_args()
    print("seed  lr        final_loss  heldout_rmse  identity_rmse  seconds")
    for seed in args.seeds:
        history, held, baseline, secs = run(seed, args.lr, args.epochs)
        print(f"{seed:<5d} {args.lr:<9.2g} {history[-1]:<11.5f} {held:<13.4f} {baseline:<14.4f} {secs:.0f}", flush=True)


if __name__ == "__main__":
    main()
