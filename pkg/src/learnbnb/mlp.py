"""The pruning classifier: a small MLP trained with weighted cross entropy.

Implemented directly in numpy (forward, backprop, SGD) so training is
deterministic, dependency-free, and cheap to gradient-check. Class 0 is
"prune", class 1 is "preserve"; a node is pruned only when the prune
probability strictly exceeds the policy threshold, so raising the threshold
can only enlarge the search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .features import FeatureVector
from .seeding import derive_seed

LOG_CLAMP = 1e-12
DEFAULT_HIDDEN = (32, 64, 16)
FORMAT_VERSION = 1


class Label(IntEnum):
    PRUNE = 0
    PRESERVE = 1


@dataclass
class MlpModel:
    """Fully connected ReLU network with a 2-way softmax head."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    schema_id: str

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            schema_id=self.schema_id,
        )

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            h.update(w.tobytes())
            h.update(b.tobytes())
        h.update(self.schema_id.encode())
        return h.hexdigest()[:16]


def init_model(
    d_in: int,
    schema_id: str,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    seed: int = 0,
) -> MlpModel:
    """Uniform initialization scaled by 1/sqrt(fan-in), deterministic in the seed."""
    rng = np.random.default_rng(derive_seed(seed, "mlp-init"))
    dims = [d_in, *hidden, 2]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases, schema_id=schema_id)


def forward_batch(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch of feature rows, shape (n, 2)."""
    act = X
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        act = np.maximum(act @ w.T + b, 0.0)
    logits = act @ model.weights[-1].T + model.biases[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def forward(model: MlpModel, f: np.ndarray) -> np.ndarray:
    """Probability 2-vector (prune, preserve) for one feature vector."""
    if f.shape != (model.input_dim,):
        raise ValueError(f"feature length {f.shape} does not match model input {model.input_dim}")
    return forward_batch(model, f[None, :])[0]


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss weights: empirical part o1 times hand-tuned part o2."""

    o1: tuple[float, float]
    o2: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        if any(v <= 0 for v in self.o1) or any(v <= 0 for v in self.o2):
            raise ValueError("class weights must be positive")

    @property
    def w(self) -> np.ndarray:
        return np.array([self.o1[0] * self.o2[0], self.o1[1] * self.o2[1]])

    @classmethod
    def from_labels(cls, labels: np.ndarray, o2: tuple[float, float] = (1.0, 1.0)) -> "ClassWeights":
        """Empirical weights: the prune class is weighted by the preserve fraction.

        Single-class datasets get the zero side floored at 1e-6 to keep the
        weights positive.
        """
        labels = np.asarray(labels)
        if labels.size == 0:
            raise ValueError("cannot compute class weights from an empty dataset")
        frac_preserve = float(np.mean(labels == Label.PRESERVE))
        o1 = (max(frac_preserve, 1e-6), max(1.0 - frac_preserve, 1e-6))
        return cls(o1=o1, o2=o2)


def weighted_ce_loss(e: np.ndarray, y_onehot: np.ndarray, w: np.ndarray) -> float:
    """Weighted cross entropy of one prediction; probabilities clamped at 1e-12."""
    return float(-(w * y_onehot * np.log(np.maximum(e, LOG_CLAMP))).sum())


def _forward_cached(model: MlpModel, X: np.ndarray):
    acts = [X]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        acts.append(np.maximum(acts[-1] @ w.T + b, 0.0))
    logits = acts[-1] @ model.weights[-1].T + model.biases[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return acts, probs


def loss_and_grads(
    model: MlpModel, X: np.ndarray, labels: np.ndarray, w: np.ndarray
):
    """Mean weighted cross entropy over a batch plus gradients for every parameter."""
    n = X.shape[0]
    acts, probs = _forward_cached(model, X)
    sample_w = w[labels]
    clamped = np.maximum(probs[np.arange(n), labels], LOG_CLAMP)
    loss = float(np.mean(sample_w * -np.log(clamped)))

    # d(loss)/d(logits): the usual softmax-CE gradient scaled per sample.
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta *= sample_w[:, None] / n

    grads_w = [np.zeros_like(w_) for w_ in model.weights]
    grads_b = [np.zeros_like(b_) for b_ in model.biases]
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = delta.T @ acts[layer]
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer]) * (acts[layer] > 0.0)
    return loss, grads_w, grads_b


@dataclass
class TrainResult:
    model: MlpModel
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def final_epoch_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def train(
    model: MlpModel,
    X: np.ndarray,
    labels: np.ndarray,
    class_weights: ClassWeights,
    epochs: int,
    lr: float = 1e-3,
    batch_size: int = 32,
    seed: int = 0,
    shuffle: bool = True,
    momentum: float = 0.0,
) -> TrainResult:
    """Mini-batch SGD, deterministic for a fixed seed; zero epochs is a no-op.

    `momentum` of 0 is plain SGD; a positive value adds classical momentum,
    which the imitation loop needs to fit within its few epochs per round.
    """
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    if X.shape[0] != labels.shape[0]:
        raise ValueError("feature and label counts differ")
    model = model.copy()
    w = class_weights.w
    rng = np.random.default_rng(derive_seed(seed, "sgd"))
    vel_w = [np.zeros_like(p) for p in model.weights]
    vel_b = [np.zeros_like(p) for p in model.biases]
    epoch_losses: list[float] = []
    n = X.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n) if shuffle else np.arange(n)
        batch_losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, gw, gb = loss_and_grads(model, X[idx], labels[idx], w)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"NaN/Inf loss at epoch {epoch}, batch offset {start}; "
                    f"lr={lr}, batch={len(idx)}"
                )
            for layer in range(len(model.weights)):
                vel_w[layer] = momentum * vel_w[layer] - lr * gw[layer]
                vel_b[layer] = momentum * vel_b[layer] - lr * gb[layer]
                model.weights[layer] += vel_w[layer]
                model.biases[layer] += vel_b[layer]
            batch_losses.append(loss)
        epoch_losses.append(float(np.mean(batch_losses)))
    return TrainResult(model=model, epoch_losses=epoch_losses)


@dataclass
class PrunePolicy:
    """Classifier plus decision threshold; prune iff P(prune) > threshold."""

    model: MlpModel
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold < 1.0:
            raise ValueError("threshold must lie in [0, 1)")


def prune_probability(model: MlpModel, fv: FeatureVector) -> float:
    if fv.schema_id != model.schema_id:
        raise ValueError(
            f"feature schema '{fv.schema_id}' does not match model schema '{model.schema_id}'"
        )
    return float(forward(model, fv.values)[Label.PRUNE])


def predict(policy: PrunePolicy, fv: FeatureVector) -> Label:
    """Thresholded decision; the boundary case is preserved, never pruned."""
    p = prune_probability(policy.model, fv)
    return Label.PRUNE if p > policy.threshold else Label.PRESERVE


def save_policy(policy: PrunePolicy, path: str | Path) -> None:
    """Write the model file: dims, row-major weights in full precision, schema, threshold."""
    doc = {
        "format_version": FORMAT_VERSION,
        "schema_id": policy.model.schema_id,
        "layer_dims": policy.model.layer_dims,
        "threshold": policy.threshold,
        "weights": [[repr(float(v)) for v in w.ravel()] for w in policy.model.weights],
        "biases": [[repr(float(v)) for v in b] for b in policy.model.biases],
    }
    Path(path).write_text(json.dumps(doc))


def load_policy(path: str | Path, expected_schema: str | None = None) -> PrunePolicy:
    """Load a model file; refuses version or schema mismatches."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')}")
    schema_id = doc["schema_id"]
    if expected_schema is not None and schema_id != expected_schema:
        raise ValueError(
            f"model schema '{schema_id}' does not match expected '{expected_schema}'"
        )
    dims = doc["layer_dims"]
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        flat = np.array([float(v) for v in doc["weights"][k]])
        if flat.size != fan_in * fan_out:
            raise ValueError("weight array size inconsistent with layer dims")
        weights.append(flat.reshape(fan_out, fan_in))
        biases.append(np.array([float(v) for v in doc["biases"][k]]))
    model = MlpModel(weights=weights, biases=biases, schema_id=schema_id)
    return PrunePolicy(model=model, threshold=float(doc["threshold"]))
