"""Command-line entry point.

Subcommands: ``run`` (one experiment), ``sweep-ratio``, ``sweep-cost``,
``partition`` (dump a partition plan for replay), ``eval`` (score a saved
checkpoint).  Exit codes: 0 ok, 1 runtime failure, 2 bad config/arguments.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .data import assign_roles, dirichlet_partition, dump_partition, make_blobs, split_train_test
from .metrics import evaluate
from .nn import load_checkpoint
from .orchestrator import run_experiment
from .seeding import derive_seed
from .sweeps import sweep_cost, sweep_unlabeled_ratio, write_summary_csv


def _parse_ratios(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError([f"--ratios: {exc}"]) from exc


def _parse_mk(raw: str) -> list[tuple[int, int]]:
    pairs = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            m, k = part.lower().split("x")
            pairs.append((int(m), int(k)))
        except ValueError as exc:
            raise ConfigError([f"--mk: expected MxK entries, got {part!r}"]) from exc
    if not pairs:
        raise ConfigError(["--mk: no pairs given"])
    return pairs


def _print_metrics(label: str, metrics) -> None:
    print(
        f"{label}: accuracy={metrics.accuracy:.4f} auc={metrics.auc_macro_ovr:.4f} "
        f"precision={metrics.precision_macro:.4f} recall={metrics.recall_macro:.4f}"
    )


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    records = run_experiment(cfg, out_dir=out_dir)
    final = [r for r in records if r.metrics is not None][-1]
    _print_metrics(f"final (round {final.round})", final.metrics)
    print(f"results written to {out_dir / 'results.csv'}")
    return 0


def _cmd_partition(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    dataset = make_blobs(
        num_classes=cfg.dataset.num_classes,
        dim=cfg.dataset.dim,
        samples_per_class=cfg.dataset.samples_per_class,
        class_separation=cfg.dataset.separation,
        seed=derive_seed(cfg.master_seed, "dataset"),
    )
    train_set, _ = split_train_test(
        dataset, cfg.dataset.test_fraction, derive_seed(cfg.master_seed, "split")
    )
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
    dump_partition(plan, args.dump)
    print(f"partition written to {args.dump}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    params = load_checkpoint(args.checkpoint)
    dataset = make_blobs(
        num_classes=cfg.dataset.num_classes,
        dim=cfg.dataset.dim,
        samples_per_class=cfg.dataset.samples_per_class,
        class_separation=cfg.dataset.separation,
        seed=derive_seed(cfg.master_seed, "dataset"),
    )
    _, test_set = split_train_test(
        dataset, cfg.dataset.test_fraction, derive_seed(cfg.master_seed, "split")
    )
    _print_metrics(f"checkpoint {args.checkpoint}", evaluate(params, test_set))
    return 0


def _cmd_sweep_ratio(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    rows = sweep_unlabeled_ratio(cfg, _parse_ratios(args.ratios), args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(rows, out / "summary.csv")
    for row in rows:
        gap = f" gap_acc={row.gap_acc:+.4f}" if row.gap_acc is not None else ""
        print(
            f"ratio={row.key} {row.method}: acc={row.acc_mean:.4f}+-{row.acc_std:.4f} "
            f"auc={row.auc_mean:.4f}+-{row.auc_std:.4f}{gap}"
        )
    print(f"summary written to {out / 'summary.csv'}")
    return 0


def _cmd_sweep_cost(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    rows = sweep_cost(cfg, _parse_mk(args.mk), args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(rows, out / "summary.csv")
    for row in rows:
        print(
            f"mk={row.key}: acc={row.acc_mean:.4f}+-{row.acc_std:.4f} "
            f"auc={row.auc_mean:.4f}+-{row.auc_std:.4f} "
            f"naive={row.downloads_naive:.0f} cached={row.downloads_cached_mean:.2f}"
        )
    print(f"summary written to {out / 'summary.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedssl",
        description="Deterministic federated semi-supervised learning simulator.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-round progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="out", help="output directory (default: ./out)")
    run.set_defaults(fn=_cmd_run)

    ratio = sub.add_parser("sweep-ratio", help="unlabeled-client ratio sweep")
    ratio.add_argument("--config", required=True)
    ratio.add_argument("--ratios", default="0,0.4,0.6,0.7,0.8,0.9")
    ratio.add_argument("--seeds", type=int, default=5, help="number of seeds per cell")
    ratio.add_argument("--out", default="out")
    ratio.set_defaults(fn=_cmd_sweep_ratio)

    cost = sub.add_parser("sweep-cost", help="communication-cost (M x K) sweep")
    cost.add_argument("--config", required=True)
    cost.add_argument("--mk", default="3x5,5x3,2x7,4x4")
    cost.add_argument("--seeds", type=int, default=5)
    cost.add_argument("--out", default="out")
    cost.set_defaults(fn=_cmd_sweep_cost)

    part = sub.add_parser("partition", help="dump the partition plan for exact replay")
    part.add_argument("--config", required=True)
    part.add_argument("--dump", required=True)
    part.set_defaults(fn=_cmd_partition)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on the config's test split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config", required=True)
    ev.set_defaults(fn=_cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
