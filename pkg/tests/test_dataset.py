import math

import numpy as np
import pytest

from gwloc.dataset import (
    GenerationConfig,
    WaveDataset,
    add_awgn,
    flatten_record,
    generate,
    random_scene,
    standardize_fit_transform,
)
from gwloc.errors import DegenerateSignalError, GeometryError
from gwloc.wavefield import R_MIN


def test_random_scene_pair_counts():
    scene = random_scene(1.0, 1.0, 8, seed=0)
    assert scene.n_pairs == 56
    scene2 = random_scene(1.0, 1.0, 2, seed=0)
    assert scene2.n_pairs == 2


def test_random_scene_deterministic():
    a = random_scene(1.0, 1.0, 5, seed=123)
    b = random_scene(1.0, 1.0, 5, seed=123)
    np.testing.assert_array_equal(a.sensors, b.sensors)
    assert a.damage == b.damage
    c = random_scene(1.0, 1.0, 5, seed=124)
    assert not np.array_equal(a.sensors, c.sensors)


def test_random_scene_respects_geometry():
    for seed in range(50):
        scene = random_scene(0.5, 2.0, 4, seed=seed)
        assert np.all(scene.sensors[:, 0] <= 0.5)
        assert np.all(scene.sensors[:, 1] <= 2.0)
        dist = np.hypot(
            scene.sensors[:, 0] - scene.damage[0],
            scene.sensors[:, 1] - scene.damage[1],
        )
        assert dist.min() >= R_MIN


def test_random_scene_rejects_single_sensor():
    with pytest.raises(ValueError):
        random_scene(1.0, 1.0, 1, seed=0)


def test_add_awgn_infinite_snr_is_identity():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(50, 4))
    out = add_awgn(data, math.inf, seed=1)
    np.testing.assert_array_equal(out, data)
    assert out is not data


def test_add_awgn_realized_snr():
    # chi-square concentration at 56,000 entries keeps each seed within 0.1 dB
    rng = np.random.default_rng(1)
    data = rng.normal(size=(1000, 56))
    signal_power = np.mean(data**2)
    for seed in range(20):
        noisy = add_awgn(data, 5.0, seed=seed)
        noise_power = np.mean((noisy - data) ** 2)
        realized = 10.0 * math.log10(signal_power / noise_power)
        assert abs(realized - 5.0) < 0.1


def test_add_awgn_rejects_zero_signal():
    with pytest.raises(DegenerateSignalError):
        add_awgn(np.zeros((10, 10)), 5.0, seed=0)


def test_add_awgn_deterministic():
    data = np.ones((8, 8))
    np.testing.assert_array_equal(add_awgn(data, 10.0, 42), add_awgn(data, 10.0, 42))


def test_generate_shapes_and_provenance(tiny_dataset):
    ds = tiny_dataset
    assert ds.n_samples == 20
    assert len(ds.train_idx) == 16 and len(ds.test_idx) == 4
    for s in ds.samples:
        assert s.data.shape == (32, 12)
        assert s.clean.shape == (32, 12)
        assert 0.7 <= s.alpha <= 1.3
        assert s.snr_db == 25.0
        assert 0 <= s.label[0] <= 1 and 0 <= s.label[1] <= 1


def test_generate_ideal_mode(tiny_ideal_dataset):
    for s in tiny_ideal_dataset.samples:
        assert s.alpha == 1.0
        assert math.isinf(s.snr_db)
        np.testing.assert_array_equal(s.data, s.clean)


def test_generate_split_disjoint_cover(tiny_dataset):
    ds = tiny_dataset
    combined = np.concatenate([ds.train_idx, ds.test_idx])
    assert sorted(combined.tolist()) == list(range(ds.n_samples))


def test_generate_fixed_layout_shared(tiny_dataset):
    assert all(s.sensors is None for s in tiny_dataset.samples)
    scene0 = tiny_dataset.scene_for(0)
    scene1 = tiny_dataset.scene_for(1)
    np.testing.assert_array_equal(scene0.sensors, scene1.sensors)
    assert scene0.damage != scene1.damage


def test_generate_per_sample_sensors():
    ds = generate(
        GenerationConfig(
            n_samples=3, n_bins=16, f_max=1.6e4, n_sensors=3, per_sample_sensors=True, seed=5
        )
    )
    assert all(s.sensors is not None for s in ds.samples)
    assert not np.array_equal(ds.samples[0].sensors, ds.samples[1].sensors)


def test_generate_deterministic():
    cfg = GenerationConfig(n_samples=4, n_bins=16, f_max=1.6e4, n_sensors=3, seed=9)
    a, b = generate(cfg), generate(cfg)
    for sa, sb in zip(a.samples, b.samples):
        np.testing.assert_array_equal(sa.data, sb.data)
        assert sa.label == sb.label and sa.alpha == sb.alpha and sa.seed == sb.seed


def test_generate_invariants_many_random_configs():
    # compact property sweep: every generated sample satisfies its invariants
    rng = np.random.default_rng(2024)
    for _ in range(200):
        cfg = GenerationConfig(
            n_samples=1,
            n_bins=int(rng.integers(2, 12)),
            f_max=float(rng.uniform(1e3, 1e6)),
            n_sensors=int(rng.integers(2, 6)),
            plate_length=float(rng.uniform(0.3, 2.0)),
            plate_width=float(rng.uniform(0.3, 2.0)),
            alpha_mode=("truncnorm", "fixed")[int(rng.integers(0, 2))],
            snr_db=float(rng.choice([5.0, 25.0, math.inf])),
            seed=int(rng.integers(0, 2**31)),
        )
        ds = generate(cfg)
        s = ds.samples[0]
        assert s.data.shape == (cfg.n_bins, cfg.n_sensors * (cfg.n_sensors - 1))
        assert 0.7 <= s.alpha <= 1.3
        assert 0 <= s.label[0] <= cfg.plate_length
        assert 0 <= s.label[1] <= cfg.plate_width
        assert np.all(np.isfinite(s.data))


def test_generate_paper_shape_record():
    # one full-scale-shaped sample: 1000 bins x 56 ordered pairs of 8 sensors
    ds = generate(
        GenerationConfig(n_samples=1, n_bins=1000, f_max=1e6, n_sensors=8, seed=0)
    )
    assert ds.samples[0].data.shape == (1000, 56)


def test_flatten_order_bin_major(tiny_dataset):
    data = tiny_dataset.samples[0].data
    flat = flatten_record(data)
    n_pairs = data.shape[1]
    # index = bin * n_pairs + pair
    assert flat[3 * n_pairs + 2] == data[3, 2]
    np.testing.assert_array_equal(flat.reshape(data.shape), data)


def test_standardize_train_stats(tiny_dataset):
    ds = standardize_fit_transform(tiny_dataset)
    train = np.stack([flatten_record(ds.samples[i].data) for i in ds.train_idx])
    np.testing.assert_allclose(train.mean(axis=0), 0.0, atol=1e-9)
    stds = train.std(axis=0)
    np.testing.assert_allclose(stds[stds > 1e-6], 1.0, atol=1e-6)
    # test split statistics come from the train split only
    test = np.stack([flatten_record(ds.samples[i].data) for i in ds.test_idx])
    assert np.max(np.abs(test.mean(axis=0))) > 1e-6


def test_standardize_constant_feature_maps_to_zero():
    ds = generate(GenerationConfig(n_samples=5, n_bins=8, f_max=8e3, n_sensors=2, seed=1))
    for s in ds.samples:
        s.data = s.data.copy()
        s.data[0, :] = 7.5  # constant across samples
    standardize_fit_transform(ds)
    for i in ds.train_idx:
        np.testing.assert_array_equal(ds.samples[i].data[0, :], 0.0)


def test_standardize_requires_train_split():
    ds = generate(GenerationConfig(n_samples=2, n_bins=8, f_max=8e3, n_sensors=2,
                                   train_fraction=0.0, seed=1))
    with pytest.raises(ValueError):
        standardize_fit_transform(ds)


def test_standardize_twice_rejected(tiny_dataset):
    standardize_fit_transform(tiny_dataset)
    with pytest.raises(ValueError):
        standardize_fit_transform(tiny_dataset)


def test_generation_config_validation():
    with pytest.raises(ValueError):
        GenerationConfig(n_samples=0)
    with pytest.raises(ValueError):
        GenerationConfig(n_bins=1)
    with pytest.raises(ValueError):
        GenerationConfig(n_sensors=1)
    with pytest.raises(ValueError):
        GenerationConfig(alpha_mode="weird")
