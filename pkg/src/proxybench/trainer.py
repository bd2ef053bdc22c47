"""Small dense-network trainer with an explicit hyperparameter surface.

The network is a plain fully-connected classifier: input -> stem_width_1 ->
stem_width_2 -> zero or more extra hidden layers (the depth knob) -> logits,
rectifier activations throughout. Everything runs in float64 on numpy, and
every source of randomness is an explicit seeded generator, so a run is a
pure function of (config, train data, val data).

Within each minibatch, example rows are processed in ascending dataset
order. That makes full-batch training bitwise independent of the shuffle
seed, which is the determinism property the test suite leans on.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .dataset import Dataset

__all__ = [
    "HyperparamConfig",
    "ModelParams",
    "RunRecord",
    "OptState",
    "GradCheckReport",
    "GradientExplosion",
    "DEPTH_EXTRA_LAYERS",
    "smoothed_cross_entropy",
    "forward_backward",
    "optimizer_step",
    "init_opt_state",
    "one_cycle_lr",
    "augment",
    "init_params",
    "evaluate_accuracy",
    "train_model",
    "gradient_check",
    "config_id",
]

_STREAM_INIT = 11
_STREAM_SHUFFLE = 12
_STREAM_AUG = 13
_STREAM_GRADCHECK = 14

# Extra hidden layers (width stem_width_2) appended after the two stems.
DEPTH_EXTRA_LAYERS = {"small": 0, "default": 1, "large": 2}

_OPTIMIZERS = ("adam", "sgd", "rmsprop")

# Adam / RMSProp constants.
_BETA1 = 0.9
_BETA2 = 0.999
_RHO = 0.99
_EPS = 1e-8

_SMOOTH_TARGET = 0.9  # probability mass placed on the labeled class


class GradientExplosion(RuntimeError):
    """Raised when a loss or gradient goes non-finite during training."""


@dataclass(frozen=True)
class HyperparamConfig:
    """One point in the hyperparameter space.

    learning_rate = 0 is allowed; it turns training into a no-op, which is
    occasionally useful as a baseline.
    """

    depth: str = "default"
    learning_rate: float = 0.003
    stem_width_1: int = 32
    stem_width_2: int = 32
    augment_prob: float = 0.5
    optimizer: str = "adam"
    label_smoothing: bool = True
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.depth not in DEPTH_EXTRA_LAYERS:
            raise ValueError(f"depth must be one of {sorted(DEPTH_EXTRA_LAYERS)}, got {self.depth!r}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError(f"learning_rate must be finite and >= 0, got {self.learning_rate}")
        if self.stem_width_1 < 1 or self.stem_width_2 < 1:
            raise ValueError("stem widths must be positive")
        if not (0.0 <= self.augment_prob <= 1.0):
            raise ValueError(f"augment_prob must be in [0, 1], got {self.augment_prob}")
        if self.optimizer not in _OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {_OPTIMIZERS}, got {self.optimizer!r}")
        if not isinstance(self.label_smoothing, bool):
            raise ValueError("label_smoothing must be a boolean")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperparamConfig":
        return cls(**d)


def config_id(config: HyperparamConfig) -> str:
    """Stable 12-hex-char identity of a config, ignoring the seed field.

    Two runs of the same settings under different seeds share an id, which
    is what lets results be paired config-by-config across proxies.
    """
    d = config.to_dict()
    d.pop("seed")
    blob = json.dumps(d, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


@dataclass
class ModelParams:
    """Per-layer weights and biases. Also reused as the gradient container."""

    weights: list
    biases: list

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and all(
            np.all(np.isfinite(b)) for b in self.biases
        )

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class RunRecord:
    """Outcome of one training run.

    cost_units is the budgeted cost |train| * epochs; an aborted run keeps
    its nominal cost, and its accuracy list is padded to full length with
    the last observed value.
    """

    dataset_id: str
    proxy_id: str
    config_id: str
    seed: int
    epoch_val_acc: list
    best_val_acc: float
    cost_units: float
    wall_ms: int
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "proxy_id": self.proxy_id,
            "config_id": self.config_id,
            "seed": self.seed,
            "epoch_val_acc": self.epoch_val_acc,
            "best_val_acc": self.best_val_acc,
            "cost_units": self.cost_units,
            "wall_ms": self.wall_ms,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**d)


@dataclass
class OptState:
    """Optimizer slots. m/v mirror the param structure; sgd keeps neither."""

    kind: str
    t: int = 0
    m: ModelParams | None = None
    v: ModelParams | None = None


@dataclass(frozen=True)
class GradCheckReport:
    passed: bool
    max_rel_err: float
    n_coords: int
    tolerance: float
    n_skipped: int = 0  # coordinates straddling a rectifier kink


def _target_rows(labels: np.ndarray, class_count: int, smoothing: bool) -> np.ndarray:
    n = len(labels)
    if smoothing:
        t = np.full((n, class_count), (1.0 - _SMOOTH_TARGET) / (class_count - 1))
        t[np.arange(n), labels] = _SMOOTH_TARGET
    else:
        t = np.zeros((n, class_count))
        t[np.arange(n), labels] = 1.0
    return t


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def smoothed_cross_entropy(logits: np.ndarray, label: int, smoothing: bool):
    """Cross entropy of one logit vector against a (possibly smoothed) target.

    Returns (loss, dloss/dlogits). The target puts 0.9 on the labeled class
    and spreads the rest uniformly when smoothing is on; one-hot otherwise.
    The gradient is softmax(logits) - target.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise ValueError(f"logits must be a vector of length >= 2, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    k = logits.shape[0]
    if not (0 <= label < k):
        raise ValueError(f"label {label} outside [0, {k})")

    target = _target_rows(np.array([label]), k, smoothing)[0]
    logp = _log_softmax(logits[None, :])[0]
    loss = float(-(target * logp).sum())
    grad = np.exp(logp) - target
    return loss, grad


def _batch_loss_grad(logits: np.ndarray, labels: np.ndarray, smoothing: bool):
    """Mean CE over a batch and dloss/dlogits (already divided by batch size)."""
    n, k = logits.shape
    target = _target_rows(labels, k, smoothing)
    logp = _log_softmax(logits)
    loss = float(-(target * logp).sum() / n)
    dlogits = (np.exp(logp) - target) / n
    return loss, dlogits


def init_params(config: HyperparamConfig, feature_dim: int, class_count: int) -> ModelParams:
    """Fan-in-scaled gaussian weights, zero biases, seeded from config.seed."""
    sizes = (
        [feature_dim, config.stem_width_1, config.stem_width_2]
        + [config.stem_width_2] * DEPTH_EXTRA_LAYERS[config.depth]
        + [class_count]
    )
    rng = np.random.default_rng([config.seed, _STREAM_INIT])
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


def _forward(params: ModelParams, x: np.ndarray):
    """Returns (logits, activations, pre_activations) for backprop."""
    acts = [x]
    zs = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        zs.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
            acts.append(h)
    return zs[-1], acts, zs


def forward_backward(params: ModelParams, features: np.ndarray, labels: np.ndarray, smoothing: bool):
    """Mean batch loss and exact analytic gradients, shaped like params."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError(f"batch features must be a non-empty 2-D array, got shape {x.shape}")
    if len(y) != len(x):
        raise ValueError(f"{len(y)} labels for {len(x)} examples")
    if x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match first layer fan-in {params.weights[0].shape[0]}"
        )

    logits, acts, zs = _forward(params, x)
    loss, delta = _batch_loss_grad(logits, y, smoothing)

    d_weights = [None] * len(params.weights)
    d_biases = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        d_weights[i] = acts[i].T @ delta
        d_biases[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (zs[i - 1] > 0)
    return loss, ModelParams(d_weights, d_biases)


def init_opt_state(optimizer: str, params: ModelParams) -> OptState:
    if optimizer not in _OPTIMIZERS:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if optimizer == "sgd":
        return OptState(kind="sgd")
    zeros = ModelParams(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )
    if optimizer == "adam":
        return OptState(kind="adam", m=zeros, v=zeros.copy())
    return OptState(kind="rmsprop", v=zeros)


def optimizer_step(state: OptState, params: ModelParams, grads: ModelParams, lr: float):
    """Apply one update in place; returns (params, state) for convenience.

    SGD: p -= lr*g. Adam: bias-corrected, beta1=0.9, beta2=0.999, eps=1e-8.
    RMSProp: rho=0.99, eps=1e-8, no momentum. A non-finite gradient raises
    GradientExplosion so the caller can record the run as aborted.
    """
    if not grads.all_finite():
        raise GradientExplosion("non-finite gradient")
    state.t += 1
    pairs = list(zip(params.weights, grads.weights)) + list(zip(params.biases, grads.biases))
    if state.kind == "sgd":
        for p, g in pairs:
            p -= lr * g
    elif state.kind == "adam":
        slots = list(zip(state.m.weights, state.v.weights)) + list(
            zip(state.m.biases, state.v.biases)
        )
        bc1 = 1.0 - _BETA1**state.t
        bc2 = 1.0 - _BETA2**state.t
        for (p, g), (m, v) in zip(pairs, slots):
            m *= _BETA1
            m += (1.0 - _BETA1) * g
            v *= _BETA2
            v += (1.0 - _BETA2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + _EPS)
    else:  # rmsprop
        slots = state.v.weights + state.v.biases
        for (p, g), v in zip(pairs, slots):
            v *= _RHO
            v += (1.0 - _RHO) * g * g
            p -= lr * g / (np.sqrt(v) + _EPS)
    return params, state


def one_cycle_lr(step: int, total_steps: int, lr_max: float) -> float:
    """One-cycle schedule: cosine warmup for the first quarter, cosine anneal after.

    Starts at lr_max/25, peaks at lr_max when step = round(0.25*total_steps),
    ends at lr_max/1e4.
    """
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if not (0 <= step < total_steps):
        raise ValueError(f"step {step} outside [0, {total_steps})")
    warm = round(0.25 * total_steps)
    if warm > 0 and step <= warm:
        t = step / warm
        lo = lr_max / 25.0
        return lo + (lr_max - lo) * (1.0 - math.cos(math.pi * t)) / 2.0
    denom = total_steps - 1 - warm
    if denom <= 0:
        return lr_max
    t = (step - warm) / denom
    floor_lr = lr_max / 1e4
    return floor_lr + (lr_max - floor_lr) * (1.0 + math.cos(math.pi * t)) / 2.0


def augment(features: np.ndarray, augment_prob: float, rng: np.random.Generator) -> np.ndarray:
    """With probability augment_prob, reverse the feature vector; else identity.

    The 1-D counterpart of a horizontal image flip: a fixed, label-preserving
    transform. Always returns a copy-safe array (never a view of the input).
    """
    if not (0.0 <= augment_prob <= 1.0):
        raise ValueError(f"augment_prob must be in [0, 1], got {augment_prob}")
    features = np.asarray(features, dtype=np.float64)
    if augment_prob > 0.0 and rng.random() < augment_prob:
        return features[::-1].copy()
    return features.copy()


def _augment_batch(x: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    if prob <= 0.0:
        return x
    flip = rng.random(len(x)) < prob
    if not flip.any():
        return x
    out = x.copy()
    out[flip] = out[flip, ::-1]
    return out


def evaluate_accuracy(params: ModelParams, d: Dataset) -> float:
    """Fraction of examples whose argmax logit matches the label."""
    if len(d) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits, _, _ = _forward(params, d.features)
    return float(np.mean(np.argmax(logits, axis=1) == d.labels))


def train_model(
    train: Dataset,
    val: Dataset,
    config: HyperparamConfig,
    *,
    dataset_id: str | None = None,
    proxy_id: str = "full",
    config_key: str | None = None,
    shuffle_seed: int | None = None,
):
    """Train a fresh model; returns (RunRecord, ModelParams).

    Deterministic given (config, data): initialization is seeded from
    config.seed, and the per-epoch shuffle and augmentation draws from
    (shuffle_seed or config.seed, epoch). Validation accuracy is measured
    after every epoch and best_val_acc is the max over epochs.

    A non-finite loss or gradient aborts the run: the record comes back
    with status "aborted", its accuracy list padded with the last observed
    value (or the current model's accuracy if no epoch finished), and its
    nominal cost intact.
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and val must be non-empty")
    if train.feature_dim != val.feature_dim or train.class_count != val.class_count:
        raise ValueError("train and val shapes disagree")

    t0 = time.perf_counter()
    params = init_params(config, train.feature_dim, train.class_count)
    opt_state = init_opt_state(config.optimizer, params)
    order_seed = config.seed if shuffle_seed is None else shuffle_seed

    n = len(train)
    steps_per_epoch = -(-n // config.batch_size)
    total_steps = config.epochs * steps_per_epoch

    epoch_val_acc: list[float] = []
    status = "ok"
    step = 0
    # Divergent configs overflow on purpose before the abort check catches
    # them, and a half-blown model can overflow again while being evaluated;
    # don't let numpy warn about either.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            perm = np.random.default_rng([order_seed, _STREAM_SHUFFLE, epoch]).permutation(n)
            rng_aug = np.random.default_rng([order_seed, _STREAM_AUG, epoch])
            try:
                for b in range(steps_per_epoch):
                    # Ascending row order within the batch keeps accumulation
                    # order canonical, so full-batch runs ignore the shuffle.
                    idx = np.sort(perm[b * config.batch_size : (b + 1) * config.batch_size])
                    x = _augment_batch(train.features[idx], config.augment_prob, rng_aug)
                    loss, grads = forward_backward(params, x, train.labels[idx], config.label_smoothing)
                    if not math.isfinite(loss):
                        raise GradientExplosion(f"non-finite loss at step {step}")
                    lr = one_cycle_lr(step, total_steps, config.learning_rate)
                    optimizer_step(opt_state, params, grads, lr)
                    step += 1
            except GradientExplosion:
                status = "aborted"
                break
            epoch_val_acc.append(evaluate_accuracy(params, val))

        if status == "aborted":
            pad = epoch_val_acc[-1] if epoch_val_acc else evaluate_accuracy(params, val)
            epoch_val_acc = epoch_val_acc + [pad] * (config.epochs - len(epoch_val_acc))

    wall_ms = int(round((time.perf_counter() - t0) * 1000))
    record = RunRecord(
        dataset_id=dataset_id if dataset_id is not None else train.id,
        proxy_id=proxy_id,
        config_id=config_key if config_key is not None else config_id(config),
        seed=config.seed,
        epoch_val_acc=epoch_val_acc,
        best_val_acc=max(epoch_val_acc),
        cost_units=float(n * config.epochs),
        wall_ms=wall_ms,
        status=status,
    )
    return record, params


def _flat_views(p: ModelParams):
    return p.weights + p.biases


def gradient_check(
    config: HyperparamConfig,
    d: Dataset,
    tolerance: float = 1e-4,
    n_coords: int = 100,
    seed: int = 0,
    grad_fn=forward_backward,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Perturbs n_coords randomly chosen parameter coordinates by h=1e-4 and
    reports the max relative error |analytic - fd| / max(|a|, |fd|, 1e-6).
    A coordinate whose perturbation flips a rectifier on or off is skipped:
    central differences are meaningless across the kink. grad_fn is
    injectable so a corrupted gradient can be shown to fail. Restricted to
    networks of at most 1e4 parameters to keep it quick.
    """
    params = init_params(config, d.feature_dim, d.class_count)
    if params.n_params() > 10_000:
        raise ValueError(f"network too large for gradient check: {params.n_params()} params")

    x, y = d.features, d.labels
    _, grads = grad_fn(params, x, y, config.label_smoothing)
    arrays = _flat_views(params)
    grad_arrays = _flat_views(grads)
    sizes = [a.size for a in arrays]
    offsets = np.cumsum([0] + sizes)

    def relu_masks():
        _, _, zs = _forward(params, x)
        return [z > 0 for z in zs[:-1]]

    h = 1e-4
    rng = np.random.default_rng([seed, _STREAM_GRADCHECK])
    coords = rng.integers(0, offsets[-1], size=n_coords)
    max_rel = 0.0
    n_skipped = 0
    for flat in coords:
        ai = int(np.searchsorted(offsets, flat, side="right") - 1)
        local = int(flat - offsets[ai])
        arr = arrays[ai]
        idx = np.unravel_index(local, arr.shape)
        orig = arr[idx]
        arr[idx] = orig + h
        loss_plus, _ = grad_fn(params, x, y, config.label_smoothing)
        masks_plus = relu_masks()
        arr[idx] = orig - h
        loss_minus, _ = grad_fn(params, x, y, config.label_smoothing)
        masks_minus = relu_masks()
        arr[idx] = orig
        if any(not np.array_equal(mp, mm) for mp, mm in zip(masks_plus, masks_minus)):
            n_skipped += 1
            continue
        fd = (loss_plus - loss_minus) / (2.0 * h)
        a = grad_arrays[ai][idx]
        rel = float(abs(a - fd) / max(abs(a), abs(fd), 1e-6))
        max_rel = max(max_rel, rel)
    return GradCheckReport(
        passed=bool(max_rel < tolerance),
        max_rel_err=max_rel,
        n_coords=n_coords,
        tolerance=tolerance,
        n_skipped=n_skipped,
    )


def with_overrides(config: HyperparamConfig, **kw) -> HyperparamConfig:
    """replace() wrapper so callers don't need dataclasses imports."""
    return replace(config, **kw)
