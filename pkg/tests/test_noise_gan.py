import numpy as np
import pytest

from simenhance.errors import ValidationError
from simenhance.nn import bce_loss
from simenhance.noise_gan import (
    GanConfig,
    GanMetricsRecord,
    NoiseDataset,
    build_discriminator,
    build_generator,
    generate_noise,
    is_imbalanced,
    make_noise_dataset,
    read_metrics_csv,
    train_gan,
    write_metrics_csv,
)
from simenhance.signal import TimeSeries


def tiny_cfg(**kw):
    base = dict(latent_dim=4, generator_hidden=8, sample_len=40, iterations=6, batch_size=8,
                metric_interval=2, seed=1, noise_scale=0.2)
    base.update(kw)
    return GanConfig(**base)


@pytest.fixture
def tiny_data():
    rng = np.random.default_rng(0)
    noise = TimeSeries(0.0, 1.0, rng.normal(0, 0.05, 300))
    return make_noise_dataset(noise, 20, 40, seed=0)


def snapshot(model):
    return [{k: v.tobytes() for k, v in d.items()} for d in model.params + model.state]


def test_generator_default_output_shape():
    g = build_generator(GanConfig(noise_scale=0.15))
    assert g.input_shape == (16,)
    assert g.output_shape == (500,)
    assert [layer.kind for layer in g.layers][:3] == ["fully_connected", "batch_norm", "fully_connected"]
    assert g.layers[0].out_features == 64


def test_zero_weights_zero_output():
    g = build_generator(tiny_cfg())
    for p in g.params:
        for k, v in p.items():
            if k != "gamma":
                v[...] = 0.0
    out = g.predict(np.zeros((3, 4)))
    assert np.array_equal(out, np.zeros((3, 40)))


def test_same_seed_same_models():
    for build in (build_generator, build_discriminator):
        assert snapshot(build(tiny_cfg())) == snapshot(build(tiny_cfg()))


def test_discriminator_conv_positions():
    d = build_discriminator(GanConfig())
    conv_out = d.layer_shapes()[2]
    assert conv_out == (4, (500 - 20) // 4 + 1) == (4, 121)
    assert d.layers[1].window == 20 and d.layers[1].stride == 4
    assert d.output_shape == (1,)


def test_discriminator_output_in_open_interval():
    d = build_discriminator(tiny_cfg())
    x = np.random.default_rng(1).normal(0, 10, (16, 40))
    p = d.predict(x)
    assert ((p > 0) & (p < 1)).all()


def test_discriminator_too_short():
    with pytest.raises(ValidationError):
        build_discriminator(tiny_cfg(sample_len=10))


@pytest.mark.parametrize("kw", [dict(batch_size=7), dict(iterations=5, metric_interval=2), dict(latent_dim=0)])
def test_invalid_config(kw):
    with pytest.raises(ValidationError):
        tiny_cfg(**kw)


def test_zero_iterations_changes_nothing(tiny_data):
    cfg = tiny_cfg(iterations=0)
    g, d = build_generator(cfg), build_discriminator(cfg)
    gs, ds = snapshot(g), snapshot(d)
    assert train_gan(g, d, tiny_data, cfg) == []
    assert snapshot(g) == gs and snapshot(d) == ds


def test_metric_cadence(tiny_data):
    cfg = tiny_cfg(iterations=10, metric_interval=5)
    recs = train_gan(build_generator(cfg), build_discriminator(cfg), tiny_data, cfg)
    assert [r.step for r in recs] == [5, 10]
    for r in recs:
        assert 0 <= r.acc_real <= 1 and 0 <= r.acc_fake <= 1
        assert r.loss_discriminator >= 0 and r.loss_generator >= 0


def test_protocol_freeze_and_labels(tiny_data):
    cfg = tiny_cfg(iterations=8)
    g, d = build_generator(cfg), build_discriminator(cfg)
    calls = []

    def spy_loss(pred, labels):
        calls.append(labels.copy())
        return bce_loss(pred, labels)

    snaps = {}
    violations = []

    def callback(phase, step):
        snaps[phase] = (snapshot(g), snapshot(d))
        if phase == "d_end" and snaps["d_start"][0] != snaps["d_end"][0]:
            violations.append(("generator changed in discriminator pass", step))
        if phase == "g_end" and snaps["g_start"][1] != snaps["g_end"][1]:
            violations.append(("discriminator changed in generator pass", step))

    train_gan(g, d, tiny_data, cfg, loss_fn=spy_loss, callback=callback)
    assert violations == []
    assert len(calls) == 2 * cfg.iterations
    half = cfg.batch_size // 2
    for k in range(cfg.iterations):
        d_labels, g_labels = calls[2 * k], calls[2 * k + 1]
        assert d_labels[:half].ravel().tolist() == [1.0] * half
        assert d_labels[half:].ravel().tolist() == [0.0] * half
        assert g_labels.ravel().tolist() == [1.0] * cfg.batch_size
    assert d.trainable == [True] * len(d.layers)


def test_training_deterministic(tiny_data):
    outs = []
    for _ in range(2):
        cfg = tiny_cfg()
        g, d = build_generator(cfg), build_discriminator(cfg)
        recs = train_gan(g, d, tiny_data, cfg)
        outs.append((recs, snapshot(g), snapshot(d)))
    assert outs[0] == outs[1]


def test_insufficient_data():
    data = NoiseDataset(np.zeros((3, 40)), np.zeros(3, dtype=int))
    cfg = tiny_cfg()
    with pytest.raises(ValidationError):
        train_gan(build_generator(cfg), build_discriminator(cfg), data, cfg)


def test_generate_noise_deterministic_and_bounded():
    g = build_generator(tiny_cfg(noise_scale=0.2))
    a = generate_noise(g, 5, seed=3)
    assert a.shape == (5, 40)
    assert np.array_equal(a, generate_noise(g, 5, seed=3))
    assert not np.array_equal(a, generate_noise(g, 5, seed=4))
    assert np.abs(a).max() <= 0.2
    with pytest.raises(ValidationError):
        generate_noise(g, 0, seed=3)


def test_noise_scale_resolution():
    cfg = GanConfig()
    assert cfg.noise_scale is None
    assert cfg.with_noise_scale_for(0.05).noise_scale == pytest.approx(0.15)
    fixed = GanConfig(noise_scale=0.4)
    assert fixed.with_noise_scale_for(0.05).noise_scale == 0.4


def test_imbalance_rule():
    assert is_imbalanced(GanMetricsRecord(100, 1.0, 1.0, 0.01, 7.1), 0.7)
    assert not is_imbalanced(GanMetricsRecord(100, 1.0, 1.0, 0.01, 6.9), 0.7)
    assert not is_imbalanced(GanMetricsRecord(100, 0.9, 1.0, 0.01, 70.0), 0.7)


def test_imbalance_warning_on_trivial_data():
    # real windows sit far outside the generator's output bound, so the
    # discriminator separates them perfectly within a few steps
    data = NoiseDataset(np.full((20, 40), 5.0), np.arange(20))
    cfg = tiny_cfg(iterations=60, metric_interval=20, noise_scale=0.01)
    scale = {"n": 0}

    def inflate_generator_loss(pred, labels):
        scale["n"] += 1
        loss, grad = bce_loss(pred, labels)
        g_pass = scale["n"] % 2 == 0
        return (loss * 100 if g_pass and scale["n"] > 2 else loss), grad

    with pytest.warns(RuntimeWarning, match="imbalance"):
        train_gan(build_generator(cfg), build_discriminator(cfg), data, cfg, loss_fn=inflate_generator_loss)


def test_metrics_csv_round_trip(tmp_path):
    recs = [GanMetricsRecord(100, 0.5, 0.25, 0.69, 0.7), GanMetricsRecord(200, 1.0, 0.0, 0.1, 3.0)]
    path = write_metrics_csv(recs, tmp_path / "m.csv")
    assert path.read_text().splitlines()[0] == "step,acc_real,acc_fake,loss_d,loss_g"
    assert read_metrics_csv(path) == recs
