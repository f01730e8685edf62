"""Fully-connected regression network trained from scratch.

Flattened standardized records map to an (x, y) damage estimate through
three ReLU hidden layers with inverted dropout; the loss is the plain
Euclidean distance to the true location. Training math runs in float64 so
gradients check against central finite differences; checkpoints store
float32 like every other file boundary.
"""

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from gwloc.dataset import WaveDataset, flatten_record
from gwloc.errors import FormatError, TrainingError

GWNN_MAGIC = b"GWNN0001"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MlpConfig:
    """Network and training hyperparameters."""

    input_dim: int
    hidden: tuple[int, ...] = (300, 200, 50)
    output_dim: int = 2
    dropout: float = 0.2
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # or "sgd"
    seed: int = 0

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError("all layer dimensions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)


@dataclass
class MlpModel:
    """Trained (or freshly initialized) network parameters.

    weights[i] has shape (fan_out, fan_in); biases[i] shape (fan_out,).
    Standardization statistics from the training dataset travel with the
    model so raw records can be fed straight to predict().
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: MlpConfig
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    training_log: list[float] = field(default_factory=list)

    def check_shapes(self):
        dims = self.config.layer_dims
        for i, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ValueError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} do not chain "
                    f"with dims {dims}"
                )


def init_model(config: MlpConfig) -> MlpModel:
    """He-uniform weights (limit sqrt(6/fan_in)), zero biases, seeded."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    dims = config.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases, config=config)


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def forward(
    model: MlpModel,
    x: np.ndarray,
    dropout_rng=None,
    dropout_masks: list[np.ndarray] | None = None,
):
    """Run the network on a standardized input (vector or batch).

    Inference mode (no rng, no masks) applies no dropout and no rescale.
    Train mode multiplies each hidden activation by a Bernoulli(1-p)/(1-p)
    mask, drawn from ``dropout_rng`` or injected via ``dropout_masks`` (one
    per hidden layer; used by the gradient checks to pin the masks).

    Returns (prediction, cache); the cache feeds backward().
    """
    xb, single = _as_batch(x)
    if xb.shape[1] != model.config.input_dim:
        raise ValueError(
            f"input has {xb.shape[1]} features, model expects {model.config.input_dim}"
        )
    p = model.config.dropout
    n_hidden = len(model.weights) - 1
    if dropout_masks is not None and len(dropout_masks) != n_hidden:
        raise ValueError(f"need {n_hidden} dropout masks, got {len(dropout_masks)}")
    train_mode = dropout_rng is not None or dropout_masks is not None

    a = xb
    inputs, relu_gates, masks = [], [], []
    for i in range(n_hidden):
        inputs.append(a)
        z = a @ model.weights[i].T + model.biases[i]
        gate = z > 0.0
        a = np.where(gate, z, 0.0)
        relu_gates.append(gate)
        if train_mode and p > 0.0:
            if dropout_masks is not None:
                mask = np.broadcast_to(dropout_masks[i], a.shape)
            else:
                mask = (dropout_rng.random(a.shape) >= p) / (1.0 - p)
            a = a * mask
            masks.append(mask)
        else:
            masks.append(None)
    inputs.append(a)
    out = a @ model.weights[-1].T + model.biases[-1]
    cache = {
        "inputs": inputs,
        "relu_gates": relu_gates,
        "masks": masks,
        "output": out,
        "single": single,
    }
    prediction = out[0] if single else out
    return prediction, cache


def euclidean_loss(prediction, label):
    """Euclidean distance between prediction(s) and label(s).

    Vectors give a scalar; (B, 2) batches give the mean distance over the
    batch (the training objective).
    """
    pred = np.asarray(prediction, dtype=np.float64)
    lab = np.asarray(label, dtype=np.float64)
    if pred.ndim == 1:
        return float(np.sqrt(np.sum((pred - lab) ** 2)))
    return float(np.mean(np.sqrt(np.sum((pred - lab) ** 2, axis=1))))


def _loss_gradient(pred: np.ndarray, label: np.ndarray) -> np.ndarray:
    """d(mean distance)/d(pred); the zero-distance subgradient is zero."""
    diff = pred - label
    dist = np.sqrt(np.sum(diff**2, axis=1, keepdims=True))
    grad = np.divide(diff, dist, out=np.zeros_like(diff), where=dist > 0.0)
    return grad / pred.shape[0]


def backward(model: MlpModel, cache: dict, label) -> tuple[list, list]:
    """Exact reverse-mode gradients of the mean Euclidean loss.

    Differentiates through the ReLU gates and the dropout masks recorded by
    the matching forward() call. Returns (weight grads, bias grads) with the
    same shapes as the parameters.
    """
    inputs = cache["inputs"]
    out = cache["output"]
    lab = np.asarray(label, dtype=np.float64)
    if cache["single"]:
        lab = lab[None, :]
    if lab.shape != out.shape:
        raise ValueError(f"label shape {lab.shape} does not match output {out.shape}")

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    g = _loss_gradient(out, lab)
    grad_w[-1] = g.T @ inputs[-1]
    grad_b[-1] = g.sum(axis=0)
    g = g @ model.weights[-1]
    for i in range(len(model.weights) - 2, -1, -1):
        if cache["masks"][i] is not None:
            g = g * cache["masks"][i]
        g = g * cache["relu_gates"][i]
        grad_w[i] = g.T @ inputs[i]
        grad_b[i] = g.sum(axis=0)
        if i > 0:
            g = g @ model.weights[i]
    return grad_w, grad_b


def _adam_update(param, grad, m, v, scratch, lr, bc1, bc2):
    """One fused in-place Adam step; scratch matches the parameter shape."""
    np.multiply(m, ADAM_BETA1, out=m)
    np.multiply(grad, 1.0 - ADAM_BETA1, out=scratch)
    np.add(m, scratch, out=m)
    np.multiply(v, ADAM_BETA2, out=v)
    np.multiply(grad, grad, out=scratch)
    np.multiply(scratch, 1.0 - ADAM_BETA2, out=scratch)
    np.add(v, scratch, out=v)
    np.divide(v, bc2, out=scratch)
    np.sqrt(scratch, out=scratch)
    np.add(scratch, ADAM_EPS, out=scratch)
    np.divide(m, scratch, out=scratch)
    np.multiply(scratch, lr / bc1, out=scratch)
    np.subtract(param, scratch, out=param)


def train(ds: WaveDataset, config: MlpConfig) -> MlpModel:
    """Mini-batch training on the dataset's train split.

    The dataset must be standardized; its statistics are embedded in the
    returned model. Batches are reshuffled each epoch from a per-epoch seed
    stream; dropout masks come from their own stream. Records the mean
    train loss per epoch. Raises TrainingError on a non-finite loss.
    """
    if not ds.standardized:
        raise ValueError("dataset must be standardized before training")
    if len(ds.train_idx) == 0:
        raise ValueError("train split is empty")
    if config.input_dim != ds.n_features:
        raise ValueError(
            f"config.input_dim {config.input_dim} != dataset features {ds.n_features}"
        )

    x_train = np.stack(
        [flatten_record(ds.samples[i].data).astype(np.float64) for i in ds.train_idx]
    )
    y_train = np.asarray([ds.samples[i].label for i in ds.train_idx], dtype=np.float64)

    model = init_model(config)
    dropout_rng = (
        np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
        if config.dropout > 0.0
        else None
    )
    use_adam = config.optimizer == "adam"
    if use_adam:
        m_w = [np.zeros_like(w) for w in model.weights]
        v_w = [np.zeros_like(w) for w in model.weights]
        m_b = [np.zeros_like(b) for b in model.biases]
        v_b = [np.zeros_like(b) for b in model.biases]
        scratch_w = [np.empty_like(w) for w in model.weights]
        scratch_b = [np.empty_like(b) for b in model.biases]
        step = 0

    n = x_train.shape[0]
    for epoch in range(config.epochs):
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed, 1, epoch])
        ).permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            xb, yb = x_train[batch], y_train[batch]
            pred, cache = forward(
                model, xb, dropout_rng=dropout_rng if config.dropout > 0.0 else None
            )
            batch_loss = euclidean_loss(pred, yb)
            if not math.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}")
            loss_sum += batch_loss * len(batch)
            grad_w, grad_b = backward(model, cache, yb)
            if use_adam:
                step += 1
                bc1 = 1.0 - ADAM_BETA1**step
                bc2 = 1.0 - ADAM_BETA2**step
                for params, grads, ms, vs, scratches in (
                    (model.weights, grad_w, m_w, v_w, scratch_w),
                    (model.biases, grad_b, m_b, v_b, scratch_b),
                ):
                    for p_arr, g_arr, m_arr, v_arr, s_arr in zip(
                        params, grads, ms, vs, scratches
                    ):
                        _adam_update(
                            p_arr, g_arr, m_arr, v_arr, s_arr,
                            config.learning_rate, bc1, bc2,
                        )
            else:
                for params, grads in (
                    (model.weights, grad_w),
                    (model.biases, grad_b),
                ):
                    for p_arr, g_arr in zip(params, grads):
                        p_arr -= config.learning_rate * g_arr
        model.training_log.append(loss_sum / n)

    model.feature_mean = ds.feature_mean.copy()
    model.feature_std = ds.feature_std.copy()
    model.check_shapes()
    return model


def predict(model: MlpModel, sample: np.ndarray, standardized: bool = False):
    """Damage location estimate for one record.

    Accepts a (n_bins, n_pairs) record (flattened bin-major) or an already
    flat vector. Raw records are standardized with the model's embedded
    statistics; pass standardized=True to skip that. The output is the raw
    regression, not clipped to the plate.
    """
    arr = np.asarray(sample, dtype=np.float64)
    if arr.ndim == 2:
        arr = flatten_record(arr)
    if arr.shape != (model.config.input_dim,):
        raise ValueError(
            f"sample has {arr.shape[0]} features, model expects {model.config.input_dim}"
        )
    if not standardized:
        if model.feature_mean is None:
            raise ValueError("model carries no standardization statistics")
        arr = (arr - model.feature_mean) / model.feature_std
    out, _ = forward(model, arr)
    return (float(out[0]), float(out[1]))


# --- GWNN serialization ----------------------------------------------------

def save_gwnn(model: MlpModel, path) -> None:
    """Write magic + length-prefixed JSON header + float32 LE parameters.

    Parameters are laid out layer by layer, each weight matrix row-major
    followed by its bias vector.
    """
    cfg = model.config
    header = {
        "format": "GWNN",
        "version": 1,
        "layer_dims": list(cfg.layer_dims),
        "dropout": cfg.dropout,
        "optimizer": {
            "name": cfg.optimizer,
            "learning_rate": cfg.learning_rate,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
        },
        "seed": cfg.seed,
        "feature_mean": None if model.feature_mean is None else model.feature_mean.tolist(),
        "feature_std": None if model.feature_std is None else model.feature_std.tolist(),
        "training_log": model.training_log,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode(
        "utf-8"
    )
    with open(path, "wb") as fh:
        fh.write(GWNN_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_gwnn(path) -> MlpModel:
    """Read a GWNN checkpoint (parameters stay float32-valued)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(GWNN_MAGIC))
        if magic != GWNN_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {GWNN_MAGIC!r}")
        raw = fh.read(8)
        if len(raw) != 8:
            raise FormatError("truncated file while reading header length")
        (header_len,) = struct.unpack("<Q", raw)
        blob = fh.read(header_len)
        if len(blob) != header_len:
            raise FormatError("truncated file while reading header")
        try:
            header = json.loads(blob)
        except json.JSONDecodeError as exc:
            raise FormatError(f"header is not valid JSON: {exc}") from exc
        dims = [int(d) for d in header["layer_dims"]]
        opt = header["optimizer"]
        config = MlpConfig(
            input_dim=dims[0],
            hidden=tuple(dims[1:-1]),
            output_dim=dims[-1],
            dropout=float(header["dropout"]),
            epochs=int(opt["epochs"]),
            batch_size=int(opt["batch_size"]),
            learning_rate=float(opt["learning_rate"]),
            optimizer=opt["name"],
            seed=int(header["seed"]),
        )
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w_bytes = fh.read(4 * fan_out * fan_in)
            b_bytes = fh.read(4 * fan_out)
            if len(w_bytes) != 4 * fan_out * fan_in or len(b_bytes) != 4 * fan_out:
                raise FormatError("truncated file while reading parameters")
            weights.append(
                np.frombuffer(w_bytes, dtype="<f4").astype(np.float64).reshape(fan_out, fan_in)
            )
            biases.append(np.frombuffer(b_bytes, dtype="<f4").astype(np.float64))
        if fh.read(1):
            raise FormatError("trailing bytes after parameters")
    mean = header.get("feature_mean")
    std = header.get("feature_std")
    model = MlpModel(
        weights=weights,
        biases=biases,
        config=config,
        feature_mean=None if mean is None else np.asarray(mean, dtype=np.float64),
        feature_std=None if std is None else np.asarray(std, dtype=np.float64),
        training_log=[float(v) for v in header["training_log"]],
    )
    model.check_shapes()
    return model
