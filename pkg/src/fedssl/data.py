"""Synthetic data, Dirichlet non-IID partitioning, and client roles.

The dataset is Gaussian blobs (a desk-scale stand-in for image corpora);
partitioning splits each class across clients by Dirichlet-drawn
proportions, which is what produces the heterogeneous shards the
aggregation protocol is built to survive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .seeding import rng_for


class PartitionInfeasibleError(RuntimeError):
    """Raised when no resample satisfies the per-client minimum size."""


class ClientRole(str, Enum):
    LABELED = "labeled"
    UNLABELED = "unlabeled"
    PARTIAL = "partial"


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.ndim != 1 or features.shape[0] != labels.shape[0]:
            raise ValueError("features must be (N, D) with one label per row")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if labels.size < self.num_classes:
            raise ValueError("need at least one sample per class")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValueError("label out of range")
        if not np.isfinite(features).all():
            raise ValueError("features contain non-finite entries")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)


@dataclass(frozen=True)
class AugmentationSpec:
    """Additive Gaussian feature noise used to build stochastic views."""

    noise_sigma: float = 1.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0.0):
            raise ValueError("noise_sigma must be finite and >= 0")


@dataclass(frozen=True)
class PartitionPlan:
    """Disjoint client index lists over a dataset, plus optional roles.

    ``labeled_indices[i]`` is the dataset-level labeled subset for partial
    clients (all indices for labeled clients, empty for unlabeled ones);
    it is stored explicitly so a dumped plan replays exactly.
    """

    client_indices: tuple[np.ndarray, ...]
    roles: tuple[ClientRole, ...] | None = None
    labeled_fraction: float | None = None
    labeled_indices: tuple[np.ndarray, ...] | None = None

    @property
    def num_clients(self) -> int:
        return len(self.client_indices)


def make_blobs(
    num_classes: int,
    dim: int,
    samples_per_class: int,
    class_separation: float,
    seed: int,
) -> Dataset:
    """Gaussian clusters with unit covariance, means >= separation apart.

    With dim >= num_classes the means sit at ``separation / sqrt(2)`` along
    distinct coordinate axes (every pair exactly ``class_separation`` apart);
    in lower dimensions they are spaced ``class_separation`` apart along the
    first axis.
    """
    if num_classes < 2 or dim < 1 or samples_per_class < 1:
        raise ValueError("num_classes, dim and samples_per_class must be positive")
    if not class_separation > 0.0:
        raise ValueError("class_separation must be > 0")
    rng = rng_for(seed, "blobs")
    centers = np.zeros((num_classes, dim))
    if dim >= num_classes:
        centers[np.arange(num_classes), np.arange(num_classes)] = class_separation / np.sqrt(2.0)
    else:
        centers[:, 0] = np.arange(num_classes) * class_separation
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), samples_per_class)
    features = centers[labels] + rng.standard_normal((labels.size, dim))
    return Dataset(features, labels, num_classes)


def split_train_test(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded random split into train and held-out test sets."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    n = len(dataset)
    n_test = int(np.floor(n * test_fraction + 0.5))
    if n_test < 1 or n_test >= n:
        raise ValueError("test_fraction leaves an empty split")
    perm = rng_for(seed, "split").permutation(n)
    return dataset.subset(np.sort(perm[n_test:])), dataset.subset(np.sort(perm[:n_test]))


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    shortfall = total - int(counts.sum())
    if shortfall > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:shortfall]] += 1
    return counts


def dirichlet_partition(
    labels: np.ndarray,
    num_clients: int,
    gamma: float,
    min_client_samples: int,
    seed: int,
    max_resamples: int = 100,
) -> PartitionPlan:
    """Split each class across clients by Dir(gamma) proportions.

    Per class, a fresh Dirichlet proportion vector is drawn and the class's
    (shuffled) indices are divided by largest-remainder rounding, so the
    client lists are a disjoint cover of all indices.  Resamples with a new
    sub-seed until every client holds at least ``min_client_samples``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if num_clients < 2:
        raise ValueError("num_clients must be >= 2")
    if not gamma > 0.0:
        raise ValueError("gamma must be > 0")
    classes = np.unique(labels)
    for attempt in range(max_resamples):
        rng = rng_for(seed, "dirichlet", attempt)
        buckets: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
        for c in classes:
            idx = rng.permutation(np.flatnonzero(labels == c))
            proportions = rng.dirichlet(np.full(num_clients, gamma))
            counts = _largest_remainder(proportions, idx.size)
            start = 0
            for client, count in enumerate(counts):
                buckets[client].append(idx[start : start + count])
                start += count
        client_indices = tuple(np.sort(np.concatenate(b)) for b in buckets)
        if min(idx.size for idx in client_indices) >= min_client_samples:
            return PartitionPlan(client_indices=client_indices)
    raise PartitionInfeasibleError(
        f"no partition with >= {min_client_samples} samples per client "
        f"after {max_resamples} resamples"
    )


def assign_roles(
    plan: PartitionPlan,
    num_labeled: int | None = None,
    num_unlabeled: int | None = None,
    partial_fraction: float | None = None,
    seed: int = 0,
) -> PartitionPlan:
    """Mark clients as labeled/unlabeled, or all partially labeled.

    In the standard mode the lowest-indexed clients are the labeled ones.
    In partial mode each client gets a seeded choice of labeled sample
    indices: nearest-rounded fraction of its shard, at least one.
    """
    n = plan.num_clients
    if partial_fraction is not None:
        if num_labeled is not None or num_unlabeled is not None:
            raise ValueError("partial mode excludes labeled/unlabeled counts")
        if not 0.0 < partial_fraction <= 1.0:
            raise ValueError("partial_fraction must be in (0, 1]")
        labeled_indices = []
        for client, indices in enumerate(plan.client_indices):
            size = indices.size
            n_lab = min(size, max(1, int(np.floor(partial_fraction * size + 0.5))))
            chosen = rng_for(seed, "roles", client).choice(size, size=n_lab, replace=False)
            labeled_indices.append(np.sort(indices[chosen]))
        return replace(
            plan,
            roles=tuple(ClientRole.PARTIAL for _ in range(n)),
            labeled_fraction=float(partial_fraction),
            labeled_indices=tuple(labeled_indices),
        )
    if num_labeled is None or num_unlabeled is None:
        raise ValueError("either labeled/unlabeled counts or partial_fraction is required")
    if num_labeled + num_unlabeled != n:
        raise ValueError(
            f"labeled + unlabeled counts ({num_labeled} + {num_unlabeled}) "
            f"must equal num_clients ({n})"
        )
    if num_labeled < 0 or num_unlabeled < 0:
        raise ValueError("role counts must be nonnegative")
    roles = tuple(
        ClientRole.LABELED if i < num_labeled else ClientRole.UNLABELED for i in range(n)
    )
    labeled_indices = tuple(
        plan.client_indices[i].copy() if roles[i] is ClientRole.LABELED else np.empty(0, np.int64)
        for i in range(n)
    )
    return replace(plan, roles=roles, labeled_fraction=None, labeled_indices=labeled_indices)


def augment(x: np.ndarray, spec: AugmentationSpec, seed: int) -> np.ndarray:
    """One stochastic view: x plus seeded N(0, sigma^2 I) noise."""
    x = np.asarray(x, dtype=np.float64)
    noise = rng_for(seed, "augment").standard_normal(x.shape)
    return x + spec.noise_sigma * noise


def dump_partition(plan: PartitionPlan, path: str | Path) -> None:
    """Write a role-annotated plan as JSON for exact replay."""
    if plan.roles is None or plan.labeled_indices is None:
        raise ValueError("plan must have roles assigned before dumping")
    doc = {
        "clients": [
            {
                "id": i,
                "role": plan.roles[i].value,
                "labeled_fraction": plan.labeled_fraction
                if plan.roles[i] is ClientRole.PARTIAL
                else None,
                "indices": plan.client_indices[i].tolist(),
                "labeled_indices": plan.labeled_indices[i].tolist(),
            }
            for i in range(plan.num_clients)
        ]
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_partition(path: str | Path) -> PartitionPlan:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    clients = sorted(doc["clients"], key=lambda c: c["id"])
    fractions = {c["labeled_fraction"] for c in clients if c["labeled_fraction"] is not None}
    if len(fractions) > 1:
        raise ValueError("inconsistent labeled_fraction across clients")
    return PartitionPlan(
        client_indices=tuple(np.array(c["indices"], dtype=np.int64) for c in clients),
        roles=tuple(ClientRole(c["role"]) for c in clients),
        labeled_fraction=next(iter(fractions)) if fractions else None,
        labeled_indices=tuple(np.array(c["labeled_indices"], dtype=np.int64) for c in clients),
    )
