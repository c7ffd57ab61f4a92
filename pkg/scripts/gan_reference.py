"""Desk-scale noise GAN run: generated vs real noise statistics and the metric log.

    python scripts/gan_reference.py --seed 0
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from simenhance.config import PipelineConfig
from simenhance.noise_gan import build_discriminator, build_generator, generate_noise, make_noise_dataset, train_gan
from simenhance.signal import add_gaussian_noise, extract_noise, synthesize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iterations", type=int, default=PipelineConfig().gan.iterations)
    ap.add_argument("--samples", type=int, default=100)
    args = ap.parse_args()

    base = PipelineConfig()
    reference = add_gaussian_noise(synthesize(base.signal), base.noise_injection.sigma, seed=args.seed)
    _, noise = extract_noise(reference, base.ma_window)
    real_std = float(noise.values.std())
    cfg = replace(base.gan, seed=args.seed, iterations=args.iterations).with_noise_scale_for(real_std)
    data = make_noise_dataset(noise, base.dataset.n_noise_windows, cfg.sample_len, seed=args.seed)
    gen, disc = build_generator(cfg), build_discriminator(cfg)
    untrained = generate_noise(gen, args.samples, seed=args.seed + 1)

    t0 = time.perf_counter()
    records = train_gan(gen, disc, data, cfg)
    secs = time.perf_counter() - t0
    print("step  acc_real  acc_fake  loss_d   loss_g")
    for r in records:
        print(f"{r.step:<5d} {r.acc_real:<9.2f} {r.acc_fake:<9.2f} {r.loss_discriminator:<8.4f} {r.loss_generator:.4f}")

    fake = generate_noise(gen, args.samples, seed=args.seed + 1)
    print(f"real noise std {real_std:.4f}, mean {noise.values.mean():+.5f}")
    print(f"untrained generator std ratio {untrained.std() / real_std:.3f}")
    print(f"trained generator std ratio {fake.std() / real_std:.3f}, mean {fake.mean():+.5f}")
    print(f"lag-1 autocorrelation real {_lag1(noise.values):+.3f} generated {np.mean([_lag1(w) for w in fake]):+.3f}")
    print(f"training took {secs:.0f}s")


def _lag1(x):
    x = np.asarray(x) - np.mean(x)
    return float(np.dot(x[:-1], x[1:]) / np.dot(x, x))


if __name__ == "__main__":
    main()
