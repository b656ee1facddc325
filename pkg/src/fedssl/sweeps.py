"""Preset sweeps: unlabeled-client ratio and communication cost.

Each sweep runs full experiments per cell over a list of derived seeds
(master_seed, master_seed+1, ...) and reduces them to mean/std summary
rows.  Rows come out in canonical order regardless of execution order.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig, MethodKind, with_roles
from .orchestrator import RoundRecord, run_experiment

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "ratio_or_mk",
    "method",
    "seed_count",
    "acc_mean",
    "acc_std",
    "auc_mean",
    "auc_std",
    "gap_acc",
    "gap_auc",
    "downloads_naive",
    "downloads_cached_mean",
    "uploads_mean",
)


@dataclass(frozen=True)
class SummaryRow:
    key: str
    method: str
    seed_count: int
    acc_mean: float
    acc_std: float
    auc_mean: float
    auc_std: float
    gap_acc: float | None = None
    gap_auc: float | None = None
    downloads_naive: float | None = None
    downloads_cached_mean: float | None = None
    uploads_mean: float | None = None


def _final_metrics(records: Sequence[RoundRecord]) -> tuple[float, float]:
    evaluated = [r for r in records if r.metrics is not None]
    last = evaluated[-1]
    return last.metrics.accuracy, last.metrics.auc_macro_ovr


def _std(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def sweep_seeds(base_seed: int, count: int) -> list[int]:
    if count < 1:
        raise ValueError("need at least one seed")
    return [base_seed + i for i in range(count)]


def sweep_unlabeled_ratio(
    base: ExperimentConfig, ratios: Sequence[float], num_seeds: int
) -> list[SummaryRow]:
    """Consensus vs weight-adjusted baseline across unlabeled-client ratios.

    The client count stays fixed; each ratio sets the unlabeled count to
    round(ratio * num_clients).  A ratio below 1 must leave at least one
    labeled client.
    """
    seeds = sweep_seeds(base.master_seed, num_seeds)
    n = base.partition.num_clients
    rows: list[SummaryRow] = []
    for ratio in ratios:
        num_unlabeled = int(np.floor(ratio * n + 0.5))
        num_labeled = n - num_unlabeled
        if num_labeled < 1:
            raise ValueError(f"ratio {ratio} leaves no labeled client among {n}")
        cell = with_roles(base, num_labeled, num_unlabeled)
        stats: dict[MethodKind, tuple[list[float], list[float]]] = {}
        for kind in (MethodKind.RSCFED, MethodKind.FED_CONSIST):
            accs, aucs = [], []
            for seed in seeds:
                cfg = replace(cell, method=replace(cell.method, kind=kind), master_seed=seed)
                acc, auc = _final_metrics(run_experiment(cfg))
                accs.append(acc)
                aucs.append(auc)
            stats[kind] = (accs, aucs)
            logger.info(
                "ratio %.2f %s: acc=%.4f+-%.4f",
                ratio,
                kind.value,
                float(np.mean(accs)),
                _std(accs),
            )
        gap_acc = float(
            np.mean(stats[MethodKind.RSCFED][0]) - np.mean(stats[MethodKind.FED_CONSIST][0])
        )
        gap_auc = float(
            np.mean(stats[MethodKind.RSCFED][1]) - np.mean(stats[MethodKind.FED_CONSIST][1])
        )
        for kind in (MethodKind.RSCFED, MethodKind.FED_CONSIST):
            accs, aucs = stats[kind]
            rows.append(
                SummaryRow(
                    key=f"{ratio:g}",
                    method=kind.value,
                    seed_count=len(seeds),
                    acc_mean=float(np.mean(accs)),
                    acc_std=_std(accs),
                    auc_mean=float(np.mean(aucs)),
                    auc_std=_std(aucs),
                    gap_acc=gap_acc if kind is MethodKind.RSCFED else None,
                    gap_auc=gap_auc if kind is MethodKind.RSCFED else None,
                )
            )
    return rows


def sweep_cost(
    base: ExperimentConfig, mk_pairs: Sequence[tuple[int, int]], num_seeds: int
) -> list[SummaryRow]:
    """Consensus accuracy and communication counters per (M, K) pair.

    Rows are sorted by M*K ascending, so cheaper configurations lead.
    """
    seeds = sweep_seeds(base.master_seed, num_seeds)
    for _, k in mk_pairs:
        if k > base.partition.num_clients:
            raise ValueError(f"K={k} exceeds num_clients={base.partition.num_clients}")
    rows: list[SummaryRow] = []
    for m, k in sorted(mk_pairs, key=lambda p: (p[0] * p[1], p[0])):
        accs, aucs, cached, uploads = [], [], [], []
        for seed in seeds:
            cfg = replace(
                base,
                method=replace(
                    base.method, kind=MethodKind.RSCFED, m_subsets=m, k_clients=k
                ),
                master_seed=seed,
            )
            records = run_experiment(cfg)
            acc, auc = _final_metrics(records)
            accs.append(acc)
            aucs.append(auc)
            trained = [r for r in records if r.round > 0]
            cached.append(float(np.mean([r.comm.downloads_cached for r in trained])))
            uploads.append(float(np.mean([r.comm.uploads for r in trained])))
        rows.append(
            SummaryRow(
                key=f"{m}x{k}",
                method=MethodKind.RSCFED.value,
                seed_count=len(seeds),
                acc_mean=float(np.mean(accs)),
                acc_std=_std(accs),
                auc_mean=float(np.mean(aucs)),
                auc_std=_std(aucs),
                downloads_naive=float(m * k),
                downloads_cached_mean=float(np.mean(cached)),
                uploads_mean=float(np.mean(uploads)),
            )
        )
        logger.info("mk %dx%d: acc=%.4f+-%.4f", m, k, rows[-1].acc_mean, rows[-1].acc_std)
    return rows


def write_summary_csv(rows: Sequence[SummaryRow], path: str | Path) -> None:
    def fmt(value: float | None) -> str:
        return "" if value is None else repr(value)

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.key,
                    row.method,
                    row.seed_count,
                    repr(row.acc_mean),
                    repr(row.acc_std),
                    repr(row.auc_mean),
                    repr(row.auc_std),
                    fmt(row.gap_acc),
                    fmt(row.gap_auc),
                    fmt(row.downloads_naive),
                    fmt(row.downloads_cached_mean),
                    fmt(row.uploads_mean),
                ]
            )
