"""Sigmoid-head MLP classifiers, early/late fusion and validation thresholding.

Everything here is deterministic: parameters are initialised and batches
shuffled from a ``numpy.random.Generator`` seeded by ``TrainConfig.seed``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import f_beta

PROB_CLIP = 1e-7
SINGLE_HIDDEN = 64


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    weighted: bool = True
    hidden_width: int = SINGLE_HIDDEN

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.hidden_width <= 0:
            raise ValueError("learning_rate, batch_size and hidden_width must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


def late_fusion_width(n_classes: int) -> int:
    return max(4 * n_classes, 32)


def sigmoid(z):
    # split by sign so exp never overflows
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out[()]


@dataclass
class MlpModel:
    """Fully connected network: ReLU hidden layers, sigmoid outputs.

    ``weights[k]`` has shape ``(layer_sizes[k], layer_sizes[k + 1])``.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need one weight matrix and bias per layer transition")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[k], self.layer_sizes[k + 1]) or b.shape != (self.layer_sizes[k + 1],):
                raise ValueError(f"layer {k} parameter shapes do not match layer sizes")

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator) -> "MlpModel":
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_sizes), weights, biases)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_sizes), [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Return the list of layer inputs (for backprop) and output probabilities."""
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if k < last:
                h = np.maximum(z, 0.0)
                acts.append(h)
            else:
                return acts, sigmoid(z)
        raise AssertionError("model has no layers")

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activations": {"hidden": self.hidden_activation, "output": self.output_activation},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpModel":
        sizes = [int(s) for s in doc["layer_sizes"]]
        weights = [np.asarray(w, dtype=float).reshape(sizes[k], sizes[k + 1]) for k, w in enumerate(doc["weights"])]
        biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
        acts = doc.get("activations", {})
        return cls(sizes, weights, biases, acts.get("hidden", "relu"), acts.get("output", "sigmoid"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MlpModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _as_batch(x, width: int | None = None, what: str = "input") -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if width is not None and a.shape[1] != width:
        raise ValueError(f"{what} has {a.shape[1]} columns, expected {width}")
    return a


def weighted_bce_loss(p, y, w=None) -> float:
    """Class-weighted binary cross-entropy, averaged over classes and samples.

    ``p`` is clipped to ``[1e-7, 1 - 1e-7]``; ``w=None`` means unit weights.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if p.shape != y.shape:
        raise ValueError(f"probabilities {p.shape} and labels {y.shape} differ in shape")
    w = np.ones(p.shape[1]) if w is None else np.asarray(w, dtype=float)
    if w.shape != (p.shape[1],):
        raise ValueError("weight vector length must equal the number of classes")
    pc = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    ll = y * np.log(pc) + (1 - y) * np.log(1 - pc)
    return float(-(ll * w).mean(axis=1).mean())


def loss_and_grads(model: MlpModel, x, y, w=None) -> tuple[float, list[np.ndarray]]:
    """Loss of a batch and its gradients, ordered like ``model.params()``."""
    x = _as_batch(x, model.n_inputs)
    y = _as_batch(y, model.n_outputs, "labels")
    w = np.ones(model.n_outputs) if w is None else np.asarray(w, dtype=float)
    acts, p = model.forward(x)
    loss = weighted_bce_loss(p, y, w)
    # d loss / d logits for sigmoid + BCE; the probability clip only guards log(0)
    delta = (p - y) * w / (x.shape[0] * model.n_outputs)
    grads: list[np.ndarray] = []
    for k in range(len(model.weights) - 1, -1, -1):
        gw = acts[k].T @ delta
        gb = delta.sum(axis=0)
        grads.append(gb)
        grads.append(gw)
        if k > 0:
            delta = (delta @ model.weights[k].T) * (acts[k] > 0)
    grads.reverse()
    return loss, grads


def train_classifier(features, labels, w, cfg: TrainConfig) -> MlpModel:
    """Mini-batch gradient descent on the weighted BCE loss.

    Returns a ``[d_in, hidden_width, N]`` model. When ``cfg.weighted`` is
    false the class weights are ignored.
    """
    x = _as_batch(features)
    y = _as_batch(labels, what="labels")
    if x.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} label rows")
    n_classes = y.shape[1]
    weights = np.ones(n_classes) if (w is None or not cfg.weighted) else np.asarray(w, dtype=float)
    if weights.shape != (n_classes,):
        raise ValueError("class weight length must equal the number of classes")

    rng = np.random.default_rng(cfg.seed)
    model = MlpModel.init([x.shape[1], cfg.hidden_width, n_classes], rng)
    n = x.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads = loss_and_grads(model, x[idx], y[idx], weights)
            for param, g in zip(model.params(), grads):
                param -= cfg.learning_rate * g
    if not all(np.all(np.isfinite(p)) for p in model.params()):
        raise FloatingPointError("training diverged to non-finite parameters")
    return model


def predict_probs(model: MlpModel, features) -> np.ndarray:
    """Sigmoid outputs; a single vector in gives a single vector out."""
    single = np.asarray(features).ndim == 1
    _, p = model.forward(_as_batch(features, model.n_inputs))
    return p[0] if single else p


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x) -> "Standardizer":
        x = _as_batch(x)
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 0, std, 1.0))

    def __call__(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale


def early_fuse_train(features_a, features_b, labels, w, cfg: TrainConfig) -> MlpModel:
    a, b = _as_batch(features_a), _as_batch(features_b)
    if a.shape[0] != b.shape[0]:
        raise ValueError("modalities are not aligned")
    return train_classifier(np.hstack([a, b]), labels, w, cfg)


def early_fuse_predict(model: MlpModel, features_a, features_b) -> np.ndarray:
    return predict_probs(model, np.hstack([_as_batch(features_a), _as_batch(features_b)]))


def late_fuse_train(probs_a, probs_b, labels, w, cfg: TrainConfig) -> MlpModel:
    """Second-stage MLP over the concatenated per-modality probability vectors."""
    a, b = _as_batch(probs_a), _as_batch(probs_b)
    y = _as_batch(labels, what="labels")
    if a.shape != b.shape or a.shape[1] != y.shape[1]:
        raise ValueError("probability vectors must both be length N and aligned")
    return train_classifier(np.hstack([a, b]), y, w, cfg)


def late_fuse_predict(model: MlpModel, p_a, p_b) -> np.ndarray:
    single = np.asarray(p_a).ndim == 1
    x = np.hstack([_as_batch(p_a), _as_batch(p_b)])
    if x.shape[1] != model.n_inputs:
        raise ValueError(f"fusion model expects {model.n_inputs} inputs, got {x.shape[1]}")
    p = predict_probs(model, x)
    return p[0] if single else p


def threshold_grid(step: float) -> np.ndarray:
    if not 0 < step < 1:
        raise ValueError("grid_step must lie in (0, 1)")
    k = np.arange(1, int(np.floor(1 / step + 1e-9)) + 1)
    grid = np.round(k * step, 12)
    grid = grid[grid <= 1 - step + 1e-12]
    return np.union1d(grid, [0.5])


def _best_by_tiebreak(scores: np.ndarray, grid: np.ndarray) -> float:
    best = scores.max()
    cand = grid[np.isclose(scores, best, rtol=0, atol=1e-12)]
    # closest to 0.5 wins, then the lower value
    order = np.lexsort((cand, np.abs(cand - 0.5)))
    return float(cand[order[0]])


def _f_at_thresholds(p: np.ndarray, y: np.ndarray, grid: np.ndarray, beta: float) -> np.ndarray:
    """F-beta of one class for every grid threshold -> shape (len(grid),)."""
    pred = p[None, :] >= grid[:, None]
    tp = (pred & y[None, :]).sum(axis=1)
    fp = (pred & ~y[None, :]).sum(axis=1)
    fn = (~pred & y[None, :]).sum(axis=1)
    prec = np.divide(tp, tp + fp, out=np.zeros(len(grid)), where=(tp + fp) > 0)
    rec = np.divide(tp, tp + fn, out=np.zeros(len(grid)), where=(tp + fn) > 0)
    return f_beta(prec, rec, beta)


def optimize_thresholds(probs, labels, beta: float = 2.0, grid_step: float = 0.05,
                        mode: str = "per_class") -> np.ndarray:
    """Pick decision thresholds that maximise validation F-beta.

    ``per_class`` searches each class independently; ``global`` picks one
    threshold maximising the macro F-beta. Ties go to the value closest to
    0.5, then the lower one.
    """
    p = _as_batch(probs)
    y = _as_batch(labels, p.shape[1], "labels").astype(bool)
    if p.shape[0] == 0:
        raise ValueError("empty validation set")
    if p.shape[0] != y.shape[0]:
        raise ValueError("probabilities and labels are not aligned")
    grid = threshold_grid(grid_step)
    table = np.stack([_f_at_thresholds(p[:, j], y[:, j], grid, beta) for j in range(p.shape[1])])
    if mode == "per_class":
        return np.array([_best_by_tiebreak(table[j], grid) for j in range(p.shape[1])])
    if mode == "global":
        return np.full(p.shape[1], _best_by_tiebreak(table.mean(axis=0), grid))
    raise ValueError(f"unknown threshold mode {mode!r}")


def apply_thresholds(p, t) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    if p.shape[-1] != t.shape[-1]:
        raise ValueError("probabilities and thresholds differ in length")
    return (p >= t).astype(np.uint8)


def gradient_check(model: MlpModel, batch, w=None, h: float = 1e-5) -> float:
    """Max relative error between backprop gradients and central differences."""
    x, y = batch
    _, analytic = loss_and_grads(model, x, y, w)
    probe = model.copy()
    worst = 0.0
    for param, g_a in zip(probe.params(), analytic):
        flat = param.reshape(-1)
        g_flat = g_a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = loss_and_grads(probe, x, y, w)
            flat[i] = orig - h
            down, _ = loss_and_grads(probe, x, y, w)
            flat[i] = orig
            g_n = (up - down) / (2 * h)
            err = abs(g_flat[i] - g_n) / max(abs(g_flat[i]), abs(g_n), 1e-8)
            worst = max(worst, err)
    return worst
