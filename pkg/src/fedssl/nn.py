"""Small dense classifier on flat parameter vectors.

Everything the aggregation math touches is a flat float64 vector with a
shape descriptor, so model combination is plain vector arithmetic.  The
network itself is a rectified-linear multilayer perceptron with a softmax
head; gradients are exact backpropagation, verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .seeding import rng_for

PROB_FLOOR = kernels.PROB_FLOOR


@dataclass(frozen=True)
class ModelSpec:
    """Layer widths of the classifier; activation is fixed to ReLU."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    num_classes: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden layer widths must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")

    @property
    def layer_dims(self) -> np.ndarray:
        return np.array((self.input_dim, *self.hidden_dims, self.num_classes), dtype=np.int64)

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.num_classes)
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def total_parameters(self) -> int:
        return sum((fi + 1) * fo for fi, fo in self.layer_shapes())


@dataclass(frozen=True)
class ParamVector:
    """Immutable flat parameter vector tied to a :class:`ModelSpec`.

    Layout: layer 0 weights row-major (fan_in x fan_out), layer 0 biases,
    layer 1 weights, ... in order.
    """

    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != self.spec.total_parameters:
            raise ValueError(
                f"parameter vector length {values.shape} does not match "
                f"spec ({self.spec.total_parameters} parameters)"
            )
        if not np.isfinite(values).all():
            raise ValueError("parameter vector contains non-finite entries")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Prediction:
    """Class-probability vector; sums to one within 1e-9."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError("probs must be a 1-D vector")
        if not np.isfinite(probs).all():
            raise ValueError("probs contain non-finite entries")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must sum to 1 within 1e-9")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)


def _check_same_spec(a: ParamVector, b: ParamVector) -> None:
    if a.spec != b.spec:
        raise ValueError(f"model spec mismatch: {a.spec} vs {b.spec}")


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    """Glorot-uniform weights, zero biases; deterministic for a fixed seed."""
    rng = rng_for(seed, "glorot-init")
    values = np.zeros(spec.total_parameters)
    off = 0
    for fan_in, fan_out in spec.layer_shapes():
        scale = np.sqrt(6.0 / (fan_in + fan_out))
        values[off : off + fan_in * fan_out] = rng.uniform(-scale, scale, fan_in * fan_out)
        off += (fan_in + 1) * fan_out
    return ParamVector(values, spec)


def forward(params: ParamVector, x: np.ndarray) -> Prediction:
    """Softmax class probabilities for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.spec.input_dim:
        raise ValueError(f"input has shape {x.shape}, expected ({params.spec.input_dim},)")
    batch = np.ascontiguousarray(x[None, :])
    probs = kernels.forward_probs(params.values, params.spec.layer_dims, batch)
    return Prediction(probs[0])


def forward_batch(params: ParamVector, x: np.ndarray) -> np.ndarray:
    """Softmax probabilities for each row of a feature matrix."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise ValueError(f"batch has shape {x.shape}, expected (*, {params.spec.input_dim})")
    return kernels.forward_probs(params.values, params.spec.layer_dims, x)


def loss_ce(pred: Prediction, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of one prediction and its gradient w.r.t. the logits.

    The loss clamps the picked probability at PROB_FLOOR so it stays finite;
    the logit gradient is the usual softmax-CE form (probs - onehot).
    """
    probs = pred.probs
    if not 0 <= label < probs.shape[0]:
        raise ValueError(f"label {label} out of range for {probs.shape[0]} classes")
    loss = float(-np.log(max(probs[label], PROB_FLOOR)))
    grad = probs.copy()
    grad[label] -= 1.0
    return loss, grad


def sharpen(pred: Prediction, tau: float) -> Prediction:
    """Temperature sharpening: p_i^(1/tau) renormalized.

    tau = 1 is the identity; smaller tau pushes mass toward the argmax.
    """
    if not tau > 0.0:
        raise ValueError("tau must be positive")
    probs = pred.probs
    if probs.max() <= 0.0:
        raise ValueError("cannot sharpen an all-zero probability vector")
    if tau == 1.0:
        return Prediction(probs)
    powered = probs ** (1.0 / tau)
    return Prediction(powered / powered.sum())


def sharpen_rows(probs: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise sharpening for probability batches (same math as sharpen)."""
    if not tau > 0.0:
        raise ValueError("tau must be positive")
    if tau == 1.0:
        return probs
    powered = probs ** (1.0 / tau)
    return powered / powered.sum(axis=1, keepdims=True)


def loss_mse_consistency(p_stu: Prediction, p_tea_sharpened: Prediction) -> tuple[float, np.ndarray]:
    """Squared L2 distance between two probability vectors, summed over
    classes, and its gradient w.r.t. the student logits (teacher constant)."""
    s = p_stu.probs
    t = p_tea_sharpened.probs
    if s.shape != t.shape:
        raise ValueError(f"prediction length mismatch: {s.shape} vs {t.shape}")
    diff = s - t
    loss = float(diff @ diff)
    gp = 2.0 * diff
    grad_logits = s * (gp - (gp @ s))
    return loss, grad_logits


def sgd_step(params: ParamVector, grads: ParamVector, lr: float) -> ParamVector:
    """One gradient-descent step: params - lr * grads."""
    _check_same_spec(params, grads)
    if not np.isfinite(grads.values).all():
        raise ValueError("gradients contain non-finite entries")
    return ParamVector(params.values - lr * grads.values, params.spec)


def ema_update(teacher: ParamVector, student: ParamVector, alpha: float) -> ParamVector:
    """Exponential moving average: alpha * student + (1 - alpha) * teacher."""
    _check_same_spec(teacher, student)
    return ParamVector(alpha * student.values + (1.0 - alpha) * teacher.values, teacher.spec)


def backprop(
    params: ParamVector,
    x: np.ndarray,
    y: np.ndarray,
    kind: str = "cross_entropy",
) -> ParamVector:
    """Mean gradient over a batch.

    kind 'cross_entropy' expects integer labels in ``y``; kind 'consistency'
    expects a matrix of per-sample target probabilities.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise ValueError(f"batch has shape {x.shape}, expected (*, {params.spec.input_dim})")
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    dims = params.spec.layer_dims
    if kind == "cross_entropy":
        labels = np.ascontiguousarray(y, dtype=np.int64)
        if labels.shape != (x.shape[0],):
            raise ValueError("labels must be one class index per row")
        if labels.min() < 0 or labels.max() >= params.spec.num_classes:
            raise ValueError("label out of range")
        _, grads = kernels.grad_cross_entropy(params.values, dims, x, labels)
    elif kind == "consistency":
        targets = np.ascontiguousarray(y, dtype=np.float64)
        if targets.shape != (x.shape[0], params.spec.num_classes):
            raise ValueError("targets must be one probability row per sample")
        _, grads = kernels.grad_consistency(params.values, dims, x, targets)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    return ParamVector(grads, params.spec)


def save_checkpoint(params: ParamVector, path: str | Path) -> None:
    """Write a parameter checkpoint as JSON in canonical layer order."""
    doc = {
        "spec": {
            "input_dim": params.spec.input_dim,
            "hidden_dims": list(params.spec.hidden_dims),
            "num_classes": params.spec.num_classes,
        },
        "values": params.values.tolist(),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path: str | Path) -> ParamVector:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    spec = ModelSpec(
        input_dim=int(doc["spec"]["input_dim"]),
        hidden_dims=tuple(doc["spec"]["hidden_dims"]),
        num_classes=int(doc["spec"]["num_classes"]),
    )
    return ParamVector(np.array(doc["values"], dtype=np.float64), spec)
