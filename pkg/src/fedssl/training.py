"""Client-side trainers.

Three trainers share one shape: copy the incoming global model, run seeded
mini-batch SGD over the client shard, return new parameter vectors without
touching the inputs.

* labeled clients minimize cross-entropy,
* unlabeled clients run the mean-teacher scheme: the teacher predicts on
  one noisy view, its prediction is sharpened into a target, the student
  is trained on a second noisy view with a squared-error consistency loss,
  and after every iteration the teacher tracks the student by EMA,
* partially labeled clients mix both losses per batch.

Every trainer is a pure function of (client shard, global params, config,
round seed), so clients can train concurrently with identical results.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .aggregation import WeightedModel, fedavg
from .data import AugmentationSpec, ClientRole
from .nn import ParamVector, sharpen_rows
from .seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

# Optional per-iteration instrumentation: fn(step, student, teacher, stats).
IterationHook = Callable[[int, np.ndarray, np.ndarray | None, dict], None]


@dataclass(frozen=True)
class LocalTrainConfig:
    """Hyper-parameters shared by all client trainers."""

    lr_labeled: float = 0.03
    lr_unlabeled: float = 0.021
    local_epochs: int = 1
    batch_size: int = 64
    tau: float = 0.5
    alpha: float = 0.001
    augmentation: AugmentationSpec = AugmentationSpec()
    partial_lambda: float = 1.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lr_labeled) and self.lr_labeled >= 0.0):
            raise ValueError("lr_labeled must be finite and >= 0")
        if not (np.isfinite(self.lr_unlabeled) and self.lr_unlabeled >= 0.0):
            raise ValueError("lr_unlabeled must be finite and >= 0")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not self.partial_lambda >= 0.0:
            raise ValueError("partial_lambda must be >= 0")


@dataclass
class ClientState:
    """One client: role, materialized shard, and persistent teacher state.

    ``labels`` is None for fully unlabeled clients (the trainer never sees
    ground truth there); for partial clients only positions flagged in
    ``labeled_mask`` carry valid labels.
    """

    id: int
    role: ClientRole
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None
    labeled_mask: np.ndarray | None = None
    teacher_params: ParamVector | None = None
    ever_selected: bool = False

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_labeled(self) -> int:
        if self.role is ClientRole.LABELED:
            return self.num_samples
        if self.labeled_mask is None:
            return 0
        return int(self.labeled_mask.sum())


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def train_labeled(
    client: ClientState,
    global_params: ParamVector,
    cfg: LocalTrainConfig,
    round_seed: int,
) -> ParamVector:
    """Supervised local training; returns the trained local model."""
    if client.role is not ClientRole.LABELED:
        raise ValueError(f"client {client.id} is not a labeled client")
    if client.num_samples == 0:
        raise ValueError(f"client {client.id} has an empty shard")
    x = client.features
    y = client.labels
    dims = global_params.spec.layer_dims
    values = global_params.values.copy()
    rng = rng_for(round_seed, "local")
    for epoch in range(cfg.local_epochs):
        losses = []
        for batch in _epoch_batches(client.num_samples, cfg.batch_size, rng):
            loss, grads = kernels.grad_cross_entropy(values, dims, x[batch], y[batch])
            values -= cfg.lr_labeled * grads
            losses.append(loss)
        logger.debug(
            "client %d epoch %d: ce_loss=%.6f", client.id, epoch, float(np.mean(losses))
        )
    return ParamVector(values, global_params.spec)


def train_unlabeled(
    client: ClientState,
    global_params: ParamVector,
    cfg: LocalTrainConfig,
    round_seed: int,
    teacher_init: ParamVector | None = None,
    on_iteration: IterationHook | None = None,
) -> tuple[ParamVector, ParamVector]:
    """Mean-teacher consistency training; returns (student, new teacher).

    The teacher starts from the client's persisted state, or from
    ``teacher_init`` the first time the client is selected.
    """
    if client.role is not ClientRole.UNLABELED:
        raise ValueError(f"client {client.id} is not an unlabeled client")
    if client.num_samples == 0:
        raise ValueError(f"client {client.id} has an empty shard")
    source = client.teacher_params if client.teacher_params is not None else teacher_init
    if source is None:
        raise ValueError(f"client {client.id} has no teacher state and no teacher_init")
    x = client.features
    dims = global_params.spec.layer_dims
    student = global_params.values.copy()
    teacher = source.values.copy()
    sigma = cfg.augmentation.noise_sigma
    rng = rng_for(round_seed, "local")
    step = 0
    for epoch in range(cfg.local_epochs):
        losses = []
        for batch in _epoch_batches(client.num_samples, cfg.batch_size, rng):
            xb = x[batch]
            view_teacher = xb + sigma * rng.standard_normal(xb.shape)
            view_student = xb + sigma * rng.standard_normal(xb.shape)
            targets = sharpen_rows(kernels.forward_probs(teacher, dims, view_teacher), cfg.tau)
            loss, grads = kernels.grad_consistency(student, dims, view_student, targets)
            student -= cfg.lr_unlabeled * grads
            teacher = cfg.alpha * student + (1.0 - cfg.alpha) * teacher
            losses.append(loss)
            if on_iteration is not None:
                on_iteration(step, student.copy(), teacher.copy(), {"mse_loss": loss})
            step += 1
        logger.debug(
            "client %d epoch %d: mse_loss=%.6f", client.id, epoch, float(np.mean(losses))
        )
    spec = global_params.spec
    return ParamVector(student, spec), ParamVector(teacher, spec)


def train_partial(
    client: ClientState,
    global_params: ParamVector,
    cfg: LocalTrainConfig,
    round_seed: int,
    teacher_init: ParamVector | None = None,
    on_iteration: IterationHook | None = None,
) -> tuple[ParamVector, ParamVector]:
    """Mixed training for partially labeled clients.

    Per batch the gradient is cross-entropy over the labeled rows plus
    ``partial_lambda`` times the consistency gradient over the unlabeled
    rows, with the same mean-teacher machinery as ``train_unlabeled``.
    Steps use the labeled-client learning rate.
    """
    if client.role is not ClientRole.PARTIAL:
        raise ValueError(f"client {client.id} is not a partially labeled client")
    if client.num_samples == 0:
        raise ValueError(f"client {client.id} has an empty shard")
    mask = client.labeled_mask
    if mask is None or not mask.any():
        raise ValueError(f"client {client.id} has an empty labeled subset")
    source = client.teacher_params if client.teacher_params is not None else teacher_init
    if source is None:
        raise ValueError(f"client {client.id} has no teacher state and no teacher_init")
    x = client.features
    y = client.labels
    dims = global_params.spec.layer_dims
    values = global_params.values.copy()
    teacher = source.values.copy()
    sigma = cfg.augmentation.noise_sigma
    rng = rng_for(round_seed, "local")
    step = 0
    for epoch in range(cfg.local_epochs):
        losses = []
        for batch in _epoch_batches(client.num_samples, cfg.batch_size, rng):
            in_batch = mask[batch]
            labeled_rows = batch[in_batch]
            unlabeled_rows = batch[~in_batch]
            grads = np.zeros_like(values)
            ce_loss = 0.0
            mse_loss = 0.0
            if labeled_rows.size:
                ce_loss, g = kernels.grad_cross_entropy(
                    values, dims, x[labeled_rows], y[labeled_rows]
                )
                grads += g
            if unlabeled_rows.size:
                xu = x[unlabeled_rows]
                view_teacher = xu + sigma * rng.standard_normal(xu.shape)
                view_student = xu + sigma * rng.standard_normal(xu.shape)
                targets = sharpen_rows(
                    kernels.forward_probs(teacher, dims, view_teacher), cfg.tau
                )
                mse_loss, g = kernels.grad_consistency(values, dims, view_student, targets)
                grads += cfg.partial_lambda * g
            values -= cfg.lr_labeled * grads
            teacher = cfg.alpha * values + (1.0 - cfg.alpha) * teacher
            losses.append(ce_loss + cfg.partial_lambda * mse_loss)
            if on_iteration is not None:
                on_iteration(
                    step,
                    values.copy(),
                    teacher.copy(),
                    {
                        "ce_loss": ce_loss,
                        "mse_loss": mse_loss,
                        "n_labeled": int(labeled_rows.size),
                        "n_unlabeled": int(unlabeled_rows.size),
                    },
                )
            step += 1
        logger.debug(
            "client %d epoch %d: mixed_loss=%.6f", client.id, epoch, float(np.mean(losses))
        )
    spec = global_params.spec
    return ParamVector(values, spec), ParamVector(teacher, spec)


def _supervised_view(client: ClientState) -> ClientState:
    """A labeled-role view of a client for supervised warm-up training."""
    if client.role is ClientRole.LABELED:
        return client
    if client.role is ClientRole.PARTIAL:
        mask = client.labeled_mask
        if mask is None or not mask.any():
            raise ValueError(f"client {client.id} has no labeled samples to warm up on")
        return ClientState(
            id=client.id,
            role=ClientRole.LABELED,
            indices=client.indices[mask],
            features=client.features[mask],
            labels=client.labels[mask],
        )
    raise ValueError(f"client {client.id} holds no labels")


def warmup(
    labeled_clients: Sequence[ClientState],
    init_params: ParamVector,
    cfg: LocalTrainConfig,
    epochs: int,
    master_seed: int,
) -> ParamVector:
    """Supervised warm-up: train each label-holding client from the random
    initialization for ``epochs`` epochs, then average weighted by shard
    size.  The result becomes the round-0 global model."""
    if not labeled_clients:
        raise ValueError("warm-up needs at least one client with labels")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if epochs == 0:
        return init_params
    warm_cfg = replace(cfg, local_epochs=epochs)
    models = []
    for client in labeled_clients:
        view = _supervised_view(client)
        trained = train_labeled(
            view, init_params, warm_cfg, derive_seed(master_seed, "warmup", client.id)
        )
        models.append(WeightedModel(trained, client.num_samples))
    return fedavg(models)
