"""The synchronization-round state machine and experiment driver.

One consensus round: draw M independent subsets of K clients, train every
distinct sampled client once from the current global model (a client that
appears in several subsets is trained once and its model reused, which is
the communication-saving behavior the naive/cached download counters
expose), aggregate each subset with distance reweighting, and average the
M sub-consensus models into the next global model.

Baseline drivers share the same client trainers: full-participation
weight-adjusted averaging, supervised-only averaging, and the ablation
that keeps sub-sampling but drops distance reweighting.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .aggregation import (
    WeightedModel,
    consensus_mean,
    dma_aggregate,
    dma_weights,
    fedavg,
    weight_adjusted_avg,
)
from .config import ExperimentConfig, MethodKind
from .data import (
    ClientRole,
    Dataset,
    PartitionPlan,
    assign_roles,
    dirichlet_partition,
    load_partition,
    make_blobs,
    split_train_test,
)
from .metrics import MetricsReport, evaluate
from .nn import ModelSpec, ParamVector, init_params, save_checkpoint
from .seeding import derive_seed, rng_for
from .training import (
    ClientState,
    LocalTrainConfig,
    train_labeled,
    train_partial,
    train_unlabeled,
    warmup,
)

logger = logging.getLogger(__name__)

# map_fn lets the caller fan client training out to an executor; results are
# identical either way because per-client seeds ignore scheduling order.
MapFn = Callable[[Callable, Iterable], Iterable]


@dataclass(frozen=True)
class SubsetDraw:
    """One sub-sampling event: K distinct clients for subset m of a round."""

    round: int
    subset_index: int
    client_ids: tuple[int, ...]


@dataclass(frozen=True)
class CommStats:
    downloads_naive: int = 0
    downloads_cached: int = 0
    uploads: int = 0


@dataclass
class RoundRecord:
    round: int
    method: MethodKind
    global_params: ParamVector
    comm: CommStats
    draws: tuple[SubsetDraw, ...] = ()
    sub_consensus: tuple[ParamVector, ...] = ()
    dma_weights_per_subset: tuple[np.ndarray, ...] = ()
    metrics: MetricsReport | None = None
    wall_ms: float = 0.0


@dataclass
class SimState:
    """Mutable server-side state between rounds."""

    clients: list[ClientState]
    global_params: ParamVector
    round0_params: ParamVector
    round: int = 0

    @property
    def num_clients(self) -> int:
        return len(self.clients)


def draw_subsets(
    num_clients: int, m_subsets: int, k_clients: int, round_idx: int, master_seed: int
) -> list[SubsetDraw]:
    """M independent uniform without-replacement draws of K clients."""
    if k_clients > num_clients:
        raise ValueError(f"K={k_clients} exceeds the client count {num_clients}")
    if m_subsets < 1:
        raise ValueError("M must be >= 1")
    draws = []
    for m in range(m_subsets):
        rng = rng_for(master_seed, "subset", round_idx, m)
        ids = np.sort(rng.choice(num_clients, size=k_clients, replace=False))
        draws.append(SubsetDraw(round=round_idx, subset_index=m, client_ids=tuple(int(i) for i in ids)))
    return draws


def _train_client(
    client: ClientState,
    global_params: ParamVector,
    round0_params: ParamVector,
    cfg: LocalTrainConfig,
    master_seed: int,
    round_idx: int,
) -> tuple[int, ParamVector, ParamVector | None]:
    seed = derive_seed(master_seed, "round", round_idx, "client", client.id)
    if client.role is ClientRole.LABELED:
        return client.id, train_labeled(client, global_params, cfg, seed), None
    if client.role is ClientRole.UNLABELED:
        student, teacher = train_unlabeled(
            client, global_params, cfg, seed, teacher_init=round0_params
        )
        return client.id, student, teacher
    student, teacher = train_partial(
        client, global_params, cfg, seed, teacher_init=round0_params
    )
    return client.id, student, teacher


def _run_locals(
    state: SimState,
    client_ids: Sequence[int],
    cfg: LocalTrainConfig,
    master_seed: int,
    round_idx: int,
    map_fn: MapFn,
) -> dict[int, ParamVector]:
    """Train the given clients once each and commit their teacher updates."""
    work = [state.clients[cid] for cid in client_ids]
    results = list(
        map_fn(
            lambda c: _train_client(
                c, state.global_params, state.round0_params, cfg, master_seed, round_idx
            ),
            work,
        )
    )
    local_models: dict[int, ParamVector] = {}
    for cid, params, teacher in sorted(results, key=lambda r: r[0]):
        local_models[cid] = params
        client = state.clients[cid]
        client.ever_selected = True
        if teacher is not None:
            client.teacher_params = teacher
    return local_models


def run_round_rscfed(
    state: SimState,
    cfg: LocalTrainConfig,
    m_subsets: int,
    k_clients: int,
    beta: float,
    master_seed: int,
    map_fn: MapFn = map,
    use_dma: bool = True,
) -> RoundRecord:
    """One full consensus round; mutates the state in place.

    ``use_dma=False`` keeps the sub-sampling structure but aggregates each
    subset with plain data-size weights (identical to beta = 0).
    """
    round_idx = state.round + 1
    draws = draw_subsets(state.num_clients, m_subsets, k_clients, round_idx, master_seed)
    distinct = sorted({cid for d in draws for cid in d.client_ids})
    local_models = _run_locals(state, distinct, cfg, master_seed, round_idx, map_fn)

    effective_beta = beta if use_dma else 0.0
    subs = []
    weight_lists = []
    for draw in draws:
        models = [
            WeightedModel(local_models[cid], state.clients[cid].num_samples)
            for cid in draw.client_ids
        ]
        weights = dma_weights(models, effective_beta)
        subs.append(dma_aggregate(models, effective_beta))
        weight_lists.append(weights)
    state.global_params = consensus_mean(subs)
    state.round = round_idx
    return RoundRecord(
        round=round_idx,
        method=MethodKind.RSCFED if use_dma else MethodKind.RSCFED_NO_DMA,
        global_params=state.global_params,
        comm=CommStats(
            downloads_naive=m_subsets * k_clients,
            downloads_cached=len(distinct),
            uploads=len(distinct),
        ),
        draws=tuple(draws),
        sub_consensus=tuple(subs),
        dma_weights_per_subset=tuple(weight_lists),
    )


def run_round_baseline(
    state: SimState,
    cfg: LocalTrainConfig,
    kind: MethodKind,
    master_seed: int,
    labeled_share: float = 0.5,
    map_fn: MapFn = map,
) -> RoundRecord:
    """One round of a non-consensus baseline; mutates the state in place."""
    if kind is MethodKind.RSCFED:
        raise ValueError("use run_round_rscfed for the consensus method")
    if kind is MethodKind.RSCFED_NO_DMA:
        raise ValueError("rscfed_nodma rounds are driven through run_round_rscfed")
    round_idx = state.round + 1
    if kind is MethodKind.FEDAVG_SUPERVISED:
        participants = [c.id for c in state.clients if c.role is ClientRole.LABELED]
        if not participants:
            raise ValueError("fedavg_supervised needs at least one labeled client")
    else:
        participants = [c.id for c in state.clients]
    local_models = _run_locals(state, participants, cfg, master_seed, round_idx, map_fn)

    def model_of(cid: int) -> WeightedModel:
        return WeightedModel(local_models[cid], state.clients[cid].num_samples)

    if kind is MethodKind.FED_CONSIST:
        labeled = [model_of(c.id) for c in state.clients if c.role is ClientRole.LABELED]
        unlabeled = [model_of(c.id) for c in state.clients if c.role is ClientRole.UNLABELED]
        if labeled and unlabeled:
            new_global = weight_adjusted_avg(labeled, unlabeled, labeled_share)
        else:
            # Partial or single-role populations have no group to boost.
            new_global = fedavg([model_of(cid) for cid in participants])
    else:
        new_global = fedavg([model_of(cid) for cid in participants])
    state.global_params = new_global
    state.round = round_idx
    n = len(participants)
    return RoundRecord(
        round=round_idx,
        method=kind,
        global_params=new_global,
        comm=CommStats(downloads_naive=n, downloads_cached=n, uploads=n),
    )


def build_clients(plan: PartitionPlan, train_set: Dataset) -> list[ClientState]:
    """Materialize per-client shards from a role-annotated partition plan."""
    if plan.roles is None or plan.labeled_indices is None:
        raise ValueError("partition plan must have roles assigned")
    clients = []
    for cid, indices in enumerate(plan.client_indices):
        role = plan.roles[cid]
        features = train_set.features[indices]
        if role is ClientRole.LABELED:
            labels = train_set.labels[indices]
            mask = np.ones(indices.size, dtype=bool)
        elif role is ClientRole.UNLABELED:
            labels = None
            mask = None
        else:
            mask = np.isin(indices, plan.labeled_indices[cid])
            labels = np.where(mask, train_set.labels[indices], -1)
        clients.append(
            ClientState(
                id=cid,
                role=role,
                indices=indices.copy(),
                features=features,
                labels=labels,
                labeled_mask=mask,
            )
        )
    return clients


def build_simulation(cfg: ExperimentConfig) -> tuple[SimState, Dataset]:
    """Dataset, partition, clients, and the warmed-up round-0 global model."""
    dataset = make_blobs(
        num_classes=cfg.dataset.num_classes,
        dim=cfg.dataset.dim,
        samples_per_class=cfg.dataset.samples_per_class,
        class_separation=cfg.dataset.separation,
        seed=derive_seed(cfg.master_seed, "dataset"),
    )
    train_set, test_set = split_train_test(
        dataset, cfg.dataset.test_fraction, derive_seed(cfg.master_seed, "split")
    )
    if cfg.partition.file:
        plan = load_partition(cfg.partition.file)
        if plan.num_clients != cfg.partition.num_clients:
            raise ValueError(
                f"partition file has {plan.num_clients} clients, "
                f"config expects {cfg.partition.num_clients}"
            )
    else:
        plan = dirichlet_partition(
            labels=train_set.labels,
            num_clients=cfg.partition.num_clients,
            gamma=cfg.partition.gamma,
            min_client_samples=cfg.partition.min_client_samples,
            seed=derive_seed(cfg.master_seed, "partition"),
        )
        roles = cfg.partition.roles
        plan = assign_roles(
            plan,
            num_labeled=roles.num_labeled,
            num_unlabeled=roles.num_unlabeled,
            partial_fraction=roles.partial_fraction,
            seed=derive_seed(cfg.master_seed, "roles"),
        )
    clients = build_clients(plan, train_set)

    spec = ModelSpec(
        input_dim=cfg.dataset.dim,
        hidden_dims=cfg.model.hidden_dims,
        num_classes=cfg.dataset.num_classes,
    )
    initial = init_params(spec, derive_seed(cfg.master_seed, "init"))
    label_holders = [c for c in clients if c.role is not ClientRole.UNLABELED]
    round0 = warmup(
        label_holders, initial, cfg.training, cfg.schedule.warmup_epochs, cfg.master_seed
    )
    return SimState(clients=clients, global_params=round0, round0_params=round0), test_set


def _run_one_round(
    state: SimState, cfg: ExperimentConfig, map_fn: MapFn
) -> RoundRecord:
    kind = cfg.method.kind
    if kind in (MethodKind.RSCFED, MethodKind.RSCFED_NO_DMA):
        return run_round_rscfed(
            state,
            cfg.training,
            cfg.method.m_subsets,
            cfg.method.k_clients,
            cfg.method.beta,
            cfg.master_seed,
            map_fn=map_fn,
            use_dma=kind is MethodKind.RSCFED,
        )
    return run_round_baseline(
        state,
        cfg.training,
        kind,
        cfg.master_seed,
        labeled_share=cfg.method.labeled_share,
        map_fn=map_fn,
    )


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    map_fn: MapFn = map,
) -> list[RoundRecord]:
    """Warm up, run the configured rounds, evaluate on the held-out split.

    Evaluation happens at every ``eval_every`` multiple and on the final
    round; the warm-up model is evaluated as round 0.  With ``out_dir`` set,
    writes ``results.csv`` (one row per evaluation), ``timings.csv`` (wall
    time per round, kept out of results.csv so reruns are byte-identical),
    checkpoints per ``checkpoint_every``, and a final checkpoint.
    """
    state, test_set = build_simulation(cfg)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    warm_record = RoundRecord(
        round=0,
        method=cfg.method.kind,
        global_params=state.global_params,
        comm=CommStats(),
        metrics=evaluate(state.global_params, test_set),
        wall_ms=(time.perf_counter() - t0) * 1000.0,
    )
    records = [warm_record]
    rounds = cfg.schedule.rounds
    for r in range(1, rounds + 1):
        t0 = time.perf_counter()
        record = _run_one_round(state, cfg, map_fn)
        if r % cfg.schedule.eval_every == 0 or r == rounds:
            record.metrics = evaluate(state.global_params, test_set)
        record.wall_ms = (time.perf_counter() - t0) * 1000.0
        records.append(record)
        if record.metrics is not None:
            logger.info(
                "round %d [%s]: acc=%.4f auc=%.4f",
                r,
                cfg.method.kind.value,
                record.metrics.accuracy,
                record.metrics.auc_macro_ovr,
            )
        if (
            out_path is not None
            and cfg.schedule.checkpoint_every > 0
            and r % cfg.schedule.checkpoint_every == 0
        ):
            save_checkpoint(state.global_params, out_path / f"checkpoint_round_{r:05d}.json")
    if out_path is not None:
        write_results_csv(records, out_path / "results.csv")
        write_timings_csv(records, out_path / "timings.csv")
        save_checkpoint(state.global_params, out_path / "checkpoint_final.json")
    return records


RESULTS_COLUMNS = (
    "round",
    "method",
    "acc",
    "auc",
    "precision",
    "recall",
    "uploads",
    "downloads_naive",
    "downloads_cached",
)


def write_results_csv(records: Sequence[RoundRecord], path: str | Path) -> None:
    """One row per evaluated round, full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(RESULTS_COLUMNS)
        for record in records:
            if record.metrics is None:
                continue
            writer.writerow(
                [
                    record.round,
                    record.method.value,
                    repr(record.metrics.accuracy),
                    repr(record.metrics.auc_macro_ovr),
                    repr(record.metrics.precision_macro),
                    repr(record.metrics.recall_macro),
                    record.comm.uploads,
                    record.comm.downloads_naive,
                    record.comm.downloads_cached,
                ]
            )


def write_timings_csv(records: Sequence[RoundRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "method", "wall_ms"])
        for record in records:
            writer.writerow([record.round, record.method.value, f"{record.wall_ms:.3f}"])
