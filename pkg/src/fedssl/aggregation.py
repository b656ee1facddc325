"""Server-side model combination.

Four aggregators over flat parameter vectors:

* ``fedavg`` -- data-size weighted average,
* ``weight_adjusted_avg`` -- the consistency-baseline fix that hands the
  labeled client group a fixed share of the total weight,
* ``dma_aggregate`` -- distance-reweighted aggregation: data-size weights
  scaled by exp(-beta * ||theta_i - theta_avg|| / N_i) and renormalized,
  so models far from the subset average are damped (RANSAC-like outlier
  suppression),
* ``consensus_mean`` -- the equally weighted average of sub-consensus
  models that becomes the next global model.

The exponential is evaluated with a max-shift so that large beta values
(the protocol uses up to 1e4) cannot underflow every weight at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import ModelSpec, ParamVector


@dataclass(frozen=True)
class WeightedModel:
    """A client's local model with its local data amount."""

    params: ParamVector
    data_size: int

    def __post_init__(self) -> None:
        if self.data_size < 1:
            raise ValueError("data_size must be >= 1")


def _common_spec(params: Sequence[ParamVector]) -> ModelSpec:
    if not params:
        raise ValueError("need at least one model")
    spec = params[0].spec
    for p in params[1:]:
        if p.spec != spec:
            raise ValueError(f"model spec mismatch: {p.spec} vs {spec}")
    return spec


def _weighted_sum(params: Sequence[ParamVector], weights: np.ndarray) -> ParamVector:
    spec = _common_spec(params)
    out = np.zeros(spec.total_parameters)
    for w, p in zip(weights, params):
        out += w * p.values
    return ParamVector(out, spec)


def fedavg(models: Sequence[WeightedModel]) -> ParamVector:
    """Data-size weighted average: sum_i (N_i / N_total) * theta_i."""
    if not models:
        raise ValueError("need at least one model")
    sizes = np.array([m.data_size for m in models], dtype=np.float64)
    weights = sizes / sizes.sum()
    # Renormalize so the weight vector matches the distance-reweighted path
    # at beta = 0 bit for bit (their float sums differ by at most one ulp).
    weights = weights / weights.sum()
    return _weighted_sum([m.params for m in models], weights)


def weight_adjusted_avg(
    labeled: Sequence[WeightedModel],
    unlabeled: Sequence[WeightedModel],
    labeled_share: float = 0.5,
) -> ParamVector:
    """Average where the labeled group jointly holds ``labeled_share`` of the
    weight and the unlabeled group the rest, each split within the group by
    data size."""
    if not labeled or not unlabeled:
        raise ValueError("both labeled and unlabeled groups must be nonempty")
    if not 0.0 < labeled_share < 1.0:
        raise ValueError("labeled_share must be in (0, 1)")
    lab_sizes = np.array([m.data_size for m in labeled], dtype=np.float64)
    unl_sizes = np.array([m.data_size for m in unlabeled], dtype=np.float64)
    weights = np.concatenate(
        [
            labeled_share * lab_sizes / lab_sizes.sum(),
            (1.0 - labeled_share) * unl_sizes / unl_sizes.sum(),
        ]
    )
    return _weighted_sum([m.params for m in (*labeled, *unlabeled)], weights)


def model_distance(a: ParamVector, b: ParamVector) -> float:
    """Euclidean norm of the parameter difference over the full flat vector."""
    if a.spec != b.spec:
        raise ValueError(f"model spec mismatch: {a.spec} vs {b.spec}")
    return float(np.linalg.norm(a.values - b.values))


def dma_weights(models: Sequence[WeightedModel], beta: float) -> np.ndarray:
    """Normalized distance-reweighted aggregation weights.

    w_i = (N_i / N_total) * exp(-beta * ||theta_i - theta_avg||_2 / N_i),
    returned normalized to sum 1.  theta_avg is the data-size weighted
    subset average; the distance is divided by N_i to damp the effect of
    more local iterations on model drift.
    """
    if not models:
        raise ValueError("need at least one model")
    if not (np.isfinite(beta) and beta >= 0.0):
        raise ValueError("beta must be finite and >= 0")
    sizes = np.array([m.data_size for m in models], dtype=np.float64)
    base = sizes / sizes.sum()
    avg = fedavg(models)
    distances = np.array([model_distance(m.params, avg) for m in models])
    exponents = -beta * distances / sizes
    # Shift by the max before exponentiating: beta ~ 1e4 with O(1) distances
    # would underflow every raw weight; the shift cancels in normalization.
    weights = base * np.exp(exponents - exponents.max())
    total = weights.sum()
    if not (np.isfinite(total) and total > 0.0):
        raise ValueError("non-finite aggregation weights")
    return weights / total


def dma_aggregate(models: Sequence[WeightedModel], beta: float) -> ParamVector:
    """Distance-reweighted subset aggregate: sum_i w_i * theta_i."""
    return _weighted_sum([m.params for m in models], dma_weights(models, beta))


def consensus_mean(subs: Sequence[ParamVector]) -> ParamVector:
    """Equally weighted average of sub-consensus models."""
    if not subs:
        raise ValueError("need at least one sub-consensus model")
    return _weighted_sum(subs, np.full(len(subs), 1.0 / len(subs)))
