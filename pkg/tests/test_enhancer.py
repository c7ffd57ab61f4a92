import time
from dataclasses import replace

import numpy as np
import pytest

from simenhance.enhancer import (
    EnhancerConfig,
    build_enhancer,
    enhance,
    enhance_series,
    expected_param_count,
    make_paired_dataset,
    rmse,
    train_enhancer,
)
from simenhance.errors import ValidationError
from simenhance.nn import AdamConfig
from simenhance.signal import TimeSeries


def small_cfg(**kw):
    base = EnhancerConfig(window_len=8, hidden_width=16, epochs=5, batch_size=4, seed=3)
    return replace(base, **kw)


def test_param_count_formula():
    cfg = EnhancerConfig(window_len=4, hidden_width=8)
    assert expected_param_count(4, 8) == 168
    assert build_enhancer(cfg).num_params() == 168


def test_full_size_shapes():
    m = build_enhancer(EnhancerConfig(), dtype=np.float32)
    shapes = m.layer_shapes()
    assert shapes == [(500,), (500,), (3200,), (3200,), (500,)]
    assert [layer.kind for layer in m.layers] == ["fully_connected"] * 4
    out, _ = m.forward(np.zeros((2, 500), dtype=np.float32))
    assert out.shape == (2, 500)


def test_same_seed_same_init():
    a, b = build_enhancer(small_cfg()), build_enhancer(small_cfg())
    for pa, pb in zip(a.params, b.params):
        for k in pa:
            assert pa[k].tobytes() == pb[k].tobytes()
    c = build_enhancer(small_cfg(seed=4))
    assert c.params[0]["W"].tobytes() != a.params[0]["W"].tobytes()


@pytest.fixture
def aligned():
    t = np.arange(60.0)
    fine = TimeSeries(0.0, 1.0, np.sin(2 * np.pi * t / 20))
    coarse = fine.with_values(np.round(fine.values * 2) / 2)
    return coarse, fine


def test_single_full_pair(aligned):
    coarse, fine = aligned
    ds = make_paired_dataset(coarse, fine, 1, len(fine), seed=0)
    assert ds.offsets.tolist() == [0]
    np.testing.assert_allclose(ds.norm.invert(ds.targets[0]), fine.values, atol=1e-12)
    np.testing.assert_allclose(ds.norm.invert(ds.sources[0]), coarse.values, atol=1e-12)


def test_dataset_deterministic_and_aligned(aligned):
    coarse, fine = aligned
    a = make_paired_dataset(coarse, fine, 30, 16, seed=9)
    b = make_paired_dataset(coarse, fine, 30, 16, seed=9)
    assert np.array_equal(a.sources, b.sources) and np.array_equal(a.targets, b.targets)
    assert ((a.offsets >= 0) & (a.offsets <= len(fine) - 16)).all()
    for k, off in enumerate(a.offsets):
        np.testing.assert_allclose(a.norm.invert(a.targets[k]), fine.values[off:off + 16], atol=1e-12)
        np.testing.assert_allclose(a.norm.invert(a.sources[k]), coarse.values[off:off + 16], atol=1e-12)


def test_dataset_window_too_long(aligned):
    coarse, fine = aligned
    with pytest.raises(ValidationError):
        make_paired_dataset(coarse, fine, 2, 61, seed=0)


def test_split_is_by_index(aligned):
    coarse, fine = aligned
    ds = make_paired_dataset(coarse, fine, 20, 8, seed=1)
    train, held = ds.split(0.1)
    assert len(train) == 18 and len(held) == 2
    assert np.array_equal(held.offsets, ds.offsets[18:])


def test_zero_epochs_changes_nothing(aligned):
    coarse, fine = aligned
    cfg = small_cfg(epochs=0)
    m = build_enhancer(cfg)
    before = m.params[1]["W"].copy()
    assert train_enhancer(m, make_paired_dataset(coarse, fine, 10, 8, 0), cfg) == []
    assert np.array_equal(m.params[1]["W"], before)


def test_batch_larger_than_dataset(aligned):
    coarse, fine = aligned
    cfg = small_cfg(batch_size=11)
    with pytest.raises(ValidationError):
        train_enhancer(build_enhancer(cfg), make_paired_dataset(coarse, fine, 10, 8, 0), cfg)


def test_identity_task_loss_decreases(aligned):
    coarse, fine = aligned
    ds = make_paired_dataset(fine, fine, 40, 8, seed=2)
    cfg = small_cfg(epochs=10, adam=AdamConfig(learning_rate=3e-3))
    m = build_enhancer(cfg)
    history = train_enhancer(m, ds, cfg)
    assert len(history) == 10
    assert all(np.isfinite(history))
    assert history[9] < history[0]


def test_training_reproducible(aligned):
    coarse, fine = aligned
    ds = make_paired_dataset(coarse, fine, 20, 8, seed=2)
    runs = []
    for _ in range(2):
        m = build_enhancer(small_cfg())
        h = train_enhancer(m, ds, small_cfg())
        runs.append((h, enhance(m, ds.sources[0])))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1].tobytes() == runs[1][1].tobytes()


def test_zero_final_layer_gives_zero_output():
    m = build_enhancer(small_cfg())
    m.params[3]["W"][...] = 0.0
    out = enhance(m, np.linspace(-1, 1, 8))
    assert np.array_equal(out, np.zeros(8))


def test_enhance_wrong_length():
    with pytest.raises(ValidationError):
        enhance(build_enhancer(small_cfg()), np.zeros(9))


def test_enhance_series_keeps_timestamps(aligned):
    coarse, fine = aligned
    ds = make_paired_dataset(coarse, fine, 5, 8, 0)
    window = coarse.slice(7, 8)
    out = enhance_series(build_enhancer(small_cfg()), window, ds.norm)
    assert np.array_equal(out.timestamps_ns(), window.timestamps_ns())


def test_single_window_inference_is_fast():
    m = build_enhancer(EnhancerConfig(), dtype=np.float32)
    x = np.random.default_rng(0).uniform(-1, 1, 500).astype(np.float32)
    enhance(m, x)
    best = min(_timed(lambda: enhance(m, x)) for _ in range(5))
    assert best < 0.010


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def test_rmse():
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
