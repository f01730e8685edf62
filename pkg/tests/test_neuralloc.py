import math

import numpy as np
import pytest

from gwloc.dataset import GenerationConfig, generate, standardize_fit_transform
from gwloc.errors import TrainingError
from gwloc.neuralloc import (
    MlpConfig,
    MlpModel,
    backward,
    euclidean_loss,
    forward,
    init_model,
    predict,
    train,
)


def _tiny_config(**kw):
    defaults = dict(input_dim=4, hidden=(3, 3, 3), output_dim=2, dropout=0.0, seed=0)
    defaults.update(kw)
    return MlpConfig(**defaults)


def _zero_model(config):
    model = init_model(config)
    model.weights = [np.zeros_like(w) for w in model.weights]
    model.biases = [np.zeros_like(b) for b in model.biases]
    return model


def _param_views(model):
    for arr in (*model.weights, *model.biases):
        yield arr


def _finite_difference_grads(model, x, label, masks, step=1e-5):
    """Central finite differences of the loss wrt every parameter."""

    def loss_value():
        pred, _ = forward(model, x, dropout_masks=masks)
        return euclidean_loss(pred, label)

    grads = []
    for arr in _param_views(model):
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + step
            up = loss_value()
            flat[k] = original - step
            down = loss_value()
            flat[k] = original
            gflat[k] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def _max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(1.0, np.abs(a))
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def test_zero_network_predicts_origin():
    model = _zero_model(_tiny_config())
    pred, _ = forward(model, np.ones(4))
    assert tuple(pred) == (0.0, 0.0)


def test_dropout_disabled_matches_inference():
    model = init_model(_tiny_config(dropout=0.0, seed=3))
    x = np.linspace(-1, 1, 4)
    rng = np.random.default_rng(0)
    train_pred, _ = forward(model, x, dropout_rng=rng)
    infer_pred, _ = forward(model, x)
    np.testing.assert_array_equal(train_pred, infer_pred)


def test_dropout_mask_counts_binomial():
    config = MlpConfig(input_dim=5, hidden=(300,), dropout=0.5, seed=0)
    model = init_model(config)
    rng = np.random.default_rng(42)
    x = np.ones(5)
    dropped = []
    for _ in range(1000):
        _, cache = forward(model, x, dropout_rng=rng)
        mask = cache["masks"][0]
        dropped.append(int(np.sum(mask == 0.0)))
    assert abs(np.mean(dropped) - 150.0) <= 10.0


def test_inverted_dropout_preserves_expectation():
    # mean of train-mode hidden outputs over many masks tracks infer mode
    config = MlpConfig(input_dim=6, hidden=(40,), dropout=0.2, seed=1)
    model = init_model(config)
    x = np.linspace(-2.0, 2.0, 6)
    infer_pred, _ = forward(model, x)
    rng = np.random.default_rng(7)
    total = np.zeros(2)
    n = 10_000
    for _ in range(n):
        pred, _ = forward(model, x, dropout_rng=rng)
        total += pred
    rel = np.abs(total / n - infer_pred) / np.abs(infer_pred)
    assert np.max(rel) < 0.02


def test_euclidean_loss_values():
    assert euclidean_loss((0.3, 0.4), (0.0, 0.0)) == pytest.approx(0.5, abs=1e-15)
    assert euclidean_loss((0.2, 0.9), (0.2, 0.9)) == 0.0


def test_loss_gradient_finite_difference():
    # d(dist)/d(pred) at ((1,0) vs (0,0)) is (1, 0)
    from gwloc.neuralloc import _loss_gradient

    grad = _loss_gradient(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]))
    step = 1e-6
    fd0 = (
        euclidean_loss((1.0 + step, 0.0), (0.0, 0.0))
        - euclidean_loss((1.0 - step, 0.0), (0.0, 0.0))
    ) / (2 * step)
    assert grad[0, 0] == pytest.approx(fd0, abs=1e-9)
    assert grad[0] == pytest.approx([1.0, 0.0], abs=1e-12)


def test_gradcheck_small_networks():
    rng = np.random.default_rng(2)
    for trial in range(3):
        config = _tiny_config(seed=trial)
        model = init_model(config)
        x = rng.normal(size=4)
        label = rng.normal(size=2) + 3.0  # keep the distance away from zero
        pred, cache = forward(model, x)
        grad_w, grad_b = backward(model, cache, label)
        numeric = _finite_difference_grads(model, x, label, masks=None)
        assert _max_rel_error([*grad_w, *grad_b], numeric) < 1e-6


def test_gradcheck_with_dropout_masks():
    rng = np.random.default_rng(5)
    config = _tiny_config(dropout=0.4, seed=9)
    model = init_model(config)
    # random biases keep pre-activations off the ReLU kink even when a mask
    # silences a whole layer (zero biases would land exactly on it)
    model.biases = [rng.normal(scale=0.3, size=b.shape) for b in model.biases]
    x = rng.normal(size=4)
    label = np.array([2.5, -1.5])
    masks = [
        (rng.random(3) >= 0.4) / 0.6,
        (rng.random(3) >= 0.4) / 0.6,
        (rng.random(3) >= 0.4) / 0.6,
    ]
    pred, cache = forward(model, x, dropout_masks=masks)
    grad_w, grad_b = backward(model, cache, label)
    numeric = _finite_difference_grads(model, x, label, masks=masks)
    assert _max_rel_error([*grad_w, *grad_b], numeric) < 1e-6


def test_zero_distance_sample_gives_zero_gradients():
    model = _zero_model(_tiny_config())
    pred, cache = forward(model, np.ones(4))
    grad_w, grad_b = backward(model, cache, (0.0, 0.0))
    assert all(np.all(g == 0.0) for g in grad_w)
    assert all(np.all(g == 0.0) for g in grad_b)


def test_full_layer_dropout_zeroes_upstream_gradients():
    config = _tiny_config(dropout=0.5, seed=4)
    model = init_model(config)
    masks = [np.ones(3) * 2.0, np.zeros(3), np.ones(3) * 2.0]  # layer 1 fully dropped
    pred, cache = forward(model, np.ones(4), dropout_masks=masks)
    grad_w, grad_b = backward(model, cache, (5.0, 5.0))
    # everything upstream of the zero mask gets no signal
    assert np.all(grad_w[0] == 0.0) and np.all(grad_b[0] == 0.0)
    assert np.all(grad_w[1] == 0.0) and np.all(grad_b[1] == 0.0)
    # downstream layers still learn
    assert np.any(grad_b[3] != 0.0)


def test_forward_shape_errors():
    model = init_model(_tiny_config())
    with pytest.raises(ValueError):
        forward(model, np.ones(5))
    with pytest.raises(ValueError):
        forward(model, np.ones(4), dropout_masks=[np.ones(3)])


@pytest.fixture(scope="module")
def trained_setup():
    ds = generate(GenerationConfig(n_samples=40, n_bins=24, f_max=2.4e4, n_sensors=3, seed=6))
    standardize_fit_transform(ds)
    config = MlpConfig(
        input_dim=ds.n_features, hidden=(16, 8), epochs=12, batch_size=8, seed=2
    )
    return ds, config, train(ds, config)


def test_train_is_deterministic(trained_setup):
    ds, config, model = trained_setup
    again = train(ds, config)
    for a, b in zip(model.weights, again.weights):
        np.testing.assert_array_equal(a, b)
    assert model.training_log == again.training_log


def test_train_loss_decreases(trained_setup):
    _, _, model = trained_setup
    assert model.training_log[0] > model.training_log[-1]


def test_train_embeds_standardization(trained_setup):
    ds, _, model = trained_setup
    np.testing.assert_array_equal(model.feature_mean, ds.feature_mean)
    np.testing.assert_array_equal(model.feature_std, ds.feature_std)


def test_train_requires_standardized_dataset():
    ds = generate(GenerationConfig(n_samples=6, n_bins=16, f_max=1.6e4, n_sensors=3, seed=1))
    with pytest.raises(ValueError):
        train(ds, MlpConfig(input_dim=ds.n_features, hidden=(4,), epochs=1))


def test_train_divergence_raises():
    ds = generate(GenerationConfig(n_samples=6, n_bins=16, f_max=1.6e4, n_sensors=3, seed=1))
    standardize_fit_transform(ds)
    config = MlpConfig(
        input_dim=ds.n_features, hidden=(4,), epochs=25, learning_rate=1e12, optimizer="sgd"
    )
    with pytest.raises(TrainingError, match="epoch"):
        train(ds, config)


def test_predict_raw_vs_standardized(trained_setup):
    ds, _, model = trained_setup
    sample = ds.samples[int(ds.test_idx[0])]
    # dataset records are already standardized here
    via_standardized = predict(model, sample.data, standardized=True)
    flat = sample.data.ravel()
    raw = flat * model.feature_std + model.feature_mean
    via_raw = predict(model, raw.reshape(sample.data.shape))
    assert via_raw == pytest.approx(via_standardized, rel=1e-9)


def test_predict_not_clipped_to_plate():
    config = _tiny_config()
    model = _zero_model(config)
    model.biases[-1] = np.array([5.0, -3.0])
    model.feature_mean = np.zeros(4)
    model.feature_std = np.ones(4)
    assert predict(model, np.ones(4)) == (5.0, -3.0)


def test_predict_zero_model_origin():
    model = _zero_model(_tiny_config())
    model.feature_mean = np.zeros(4)
    model.feature_std = np.ones(4)
    assert predict(model, np.ones(4)) == (0.0, 0.0)


def test_predict_shape_error(trained_setup):
    _, _, model = trained_setup
    with pytest.raises(ValueError):
        predict(model, np.ones(3))


def test_sgd_training_runs():
    ds = generate(GenerationConfig(n_samples=8, n_bins=16, f_max=1.6e4, n_sensors=3, seed=2))
    standardize_fit_transform(ds)
    config = MlpConfig(
        input_dim=ds.n_features, hidden=(6,), epochs=2, optimizer="sgd", seed=0
    )
    model = train(ds, config)
    assert len(model.training_log) == 2


def test_config_defaults_match_reference_architecture():
    config = MlpConfig(input_dim=100)
    assert config.hidden == (300, 200, 50)
    assert config.output_dim == 2
    assert config.epochs == 50
    assert config.optimizer == "adam"
    assert config.batch_size == 32
    assert config.learning_rate == 1e-3


def test_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(input_dim=0)
    with pytest.raises(ValueError):
        MlpConfig(input_dim=4, dropout=1.0)
    with pytest.raises(ValueError):
        MlpConfig(input_dim=4, epochs=0)
    with pytest.raises(ValueError):
        MlpConfig(input_dim=4, optimizer="rmsprop")


def test_shape_chain_holds_after_training(trained_setup):
    _, _, model = trained_setup
    model.check_shapes()
    dims = model.config.layer_dims
    assert dims[0] == model.weights[0].shape[1]
    assert dims[-1] == model.weights[-1].shape[0]
