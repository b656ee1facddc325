"""Experiment configuration: JSON schema, validation, and typed access.

Configs are JSON documents mirroring the dataclass tree below.  Validation
is fail-closed: unknown keys are rejected and every violation is reported
with its dotted field path, so a bad config never half-runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any

from .data import AugmentationSpec
from .training import LocalTrainConfig


class ConfigError(ValueError):
    """Config validation failure; ``problems`` name the offending fields."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(self.problems))


class MethodKind(str, Enum):
    RSCFED = "rscfed"
    RSCFED_NO_DMA = "rscfed_nodma"
    FED_CONSIST = "fedconsist"
    FEDAVG_SUPERVISED = "fedavg_supervised"


@dataclass(frozen=True)
class DatasetConfig:
    num_classes: int
    dim: int
    samples_per_class: int
    separation: float
    test_fraction: float


@dataclass(frozen=True)
class RolesConfig:
    num_labeled: int | None = None
    num_unlabeled: int | None = None
    partial_fraction: float | None = None


@dataclass(frozen=True)
class PartitionConfig:
    num_clients: int
    gamma: float
    roles: RolesConfig
    min_client_samples: int = 8
    file: str | None = None


@dataclass(frozen=True)
class ModelConfig:
    hidden_dims: tuple[int, ...] = (32,)


@dataclass(frozen=True)
class MethodConfig:
    kind: MethodKind
    m_subsets: int = 3
    k_clients: int = 5
    beta: float = 10.0
    labeled_share: float = 0.5


@dataclass(frozen=True)
class ScheduleConfig:
    rounds: int
    warmup_epochs: int = 6
    eval_every: int = 5
    checkpoint_every: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    partition: PartitionConfig
    model: ModelConfig
    training: LocalTrainConfig
    method: MethodConfig
    schedule: ScheduleConfig
    master_seed: int


class _Reader:
    """Tracks consumed keys and collects violations with dotted paths."""

    def __init__(self, doc: dict, prefix: str, problems: list[str]):
        self.doc = doc
        self.prefix = prefix
        self.problems = problems
        self.seen: set[str] = set()

    def _path(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def fail(self, key: str, message: str) -> None:
        self.problems.append(f"{self._path(key)}: {message}")

    def section(self, key: str, required: bool = True) -> "_Reader | None":
        self.seen.add(key)
        value = self.doc.get(key)
        if value is None:
            if required:
                self.fail(key, "missing required section")
            return None
        if not isinstance(value, dict):
            self.fail(key, "must be an object")
            return None
        return _Reader(value, self._path(key), self.problems)

    def value(
        self,
        key: str,
        kind: type,
        required: bool = True,
        default: Any = None,
        check=None,
        describe: str = "",
    ) -> Any:
        self.seen.add(key)
        if key not in self.doc:
            if required:
                self.fail(key, "missing required field")
            return default
        value = self.doc[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
            self.fail(key, f"must be an integer, got {value!r}")
            return default
        if not isinstance(value, kind):
            self.fail(key, f"must be {kind.__name__}, got {value!r}")
            return default
        if check is not None and not check(value):
            self.fail(key, describe or f"invalid value {value!r}")
            return default
        return value

    def int_list(self, key: str, required: bool = True, default=None):
        self.seen.add(key)
        if key not in self.doc:
            if required:
                self.fail(key, "missing required field")
            return default
        value = self.doc[key]
        if not isinstance(value, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            self.fail(key, f"must be a list of integers, got {value!r}")
            return default
        return value

    def reject_unknown(self) -> None:
        for key in self.doc:
            if key not in self.seen:
                self.fail(key, "unknown field")


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document and build the typed tree.

    Raises :class:`ConfigError` listing every violation by field path.
    """
    problems: list[str] = []
    root = _Reader(doc, "", problems)

    dataset_cfg = None
    ds = root.section("dataset")
    if ds is not None:
        dataset_cfg = DatasetConfig(
            num_classes=ds.value("num_classes", int, check=lambda v: v >= 2, describe="must be >= 2"),
            dim=ds.value("dim", int, check=lambda v: v >= 1, describe="must be >= 1"),
            samples_per_class=ds.value(
                "samples_per_class", int, check=lambda v: v >= 1, describe="must be >= 1"
            ),
            separation=ds.value(
                "separation", float, check=lambda v: v > 0, describe="must be > 0"
            ),
            test_fraction=ds.value(
                "test_fraction", float, check=lambda v: 0 < v < 1, describe="must be in (0, 1)"
            ),
        )
        ds.reject_unknown()

    partition_cfg = None
    pt = root.section("partition")
    if pt is not None:
        roles_cfg = RolesConfig()
        rl = pt.section("roles")
        if rl is not None:
            roles_cfg = RolesConfig(
                num_labeled=rl.value("num_labeled", int, required=False),
                num_unlabeled=rl.value("num_unlabeled", int, required=False),
                partial_fraction=rl.value(
                    "partial_fraction",
                    float,
                    required=False,
                    check=lambda v: 0 < v <= 1,
                    describe="must be in (0, 1]",
                ),
            )
            rl.reject_unknown()
            if roles_cfg.partial_fraction is None:
                if roles_cfg.num_labeled is None or roles_cfg.num_unlabeled is None:
                    rl.fail(
                        "num_labeled",
                        "set num_labeled and num_unlabeled, or partial_fraction",
                    )
                elif roles_cfg.num_labeled < 1:
                    rl.fail("num_labeled", "must be >= 1")
            elif roles_cfg.num_labeled is not None or roles_cfg.num_unlabeled is not None:
                rl.fail("partial_fraction", "exclusive with labeled/unlabeled counts")
        num_clients = pt.value("num_clients", int, check=lambda v: v >= 2, describe="must be >= 2")
        partition_cfg = PartitionConfig(
            num_clients=num_clients,
            gamma=pt.value("gamma", float, check=lambda v: v > 0, describe="must be > 0"),
            roles=roles_cfg,
            min_client_samples=pt.value(
                "min_client_samples",
                int,
                required=False,
                default=8,
                check=lambda v: v >= 1,
                describe="must be >= 1",
            ),
            file=pt.value("file", str, required=False),
        )
        if (
            roles_cfg.partial_fraction is None
            and roles_cfg.num_labeled is not None
            and roles_cfg.num_unlabeled is not None
            and num_clients is not None
            and roles_cfg.num_labeled + roles_cfg.num_unlabeled != num_clients
        ):
            pt.fail("roles", "num_labeled + num_unlabeled must equal num_clients")
        pt.reject_unknown()

    model_cfg = ModelConfig()
    md = root.section("model", required=False)
    if md is not None:
        hidden = md.int_list("hidden_dims", required=False, default=[32])
        md.reject_unknown()
        if hidden is not None:
            if any(h < 1 for h in hidden):
                md.fail("hidden_dims", "layer widths must be >= 1")
            else:
                model_cfg = ModelConfig(hidden_dims=tuple(hidden))

    training_cfg = None
    tr = root.section("training", required=False)
    kwargs: dict[str, Any] = {}
    if tr is not None:
        for name, kind in (
            ("lr_labeled", float),
            ("lr_unlabeled", float),
            ("local_epochs", int),
            ("batch_size", int),
            ("tau", float),
            ("alpha", float),
            ("partial_lambda", float),
        ):
            value = tr.value(name, kind, required=False)
            if value is not None:
                kwargs[name] = value
        sigma = tr.value("noise_sigma", float, required=False)
        if sigma is not None:
            kwargs["augmentation"] = AugmentationSpec(noise_sigma=sigma)
        tr.reject_unknown()
    if not problems:
        try:
            training_cfg = LocalTrainConfig(**kwargs)
        except ValueError as exc:
            problems.append(f"training: {exc}")

    method_cfg = None
    mt = root.section("method")
    if mt is not None:
        kind_raw = mt.value(
            "kind",
            str,
            check=lambda v: v in {m.value for m in MethodKind},
            describe="must be one of " + ", ".join(m.value for m in MethodKind),
        )
        method_cfg = MethodConfig(
            kind=MethodKind(kind_raw) if kind_raw else MethodKind.RSCFED,
            m_subsets=mt.value(
                "M", int, required=False, default=3, check=lambda v: v >= 1, describe="must be >= 1"
            ),
            k_clients=mt.value(
                "K", int, required=False, default=5, check=lambda v: v >= 1, describe="must be >= 1"
            ),
            beta=mt.value(
                "beta",
                float,
                required=False,
                default=10.0,
                check=lambda v: v >= 0,
                describe="must be >= 0",
            ),
            labeled_share=mt.value(
                "labeled_share",
                float,
                required=False,
                default=0.5,
                check=lambda v: 0 < v < 1,
                describe="must be in (0, 1)",
            ),
        )
        mt.reject_unknown()
        if (
            partition_cfg is not None
            and partition_cfg.num_clients is not None
            and method_cfg.k_clients is not None
            and method_cfg.k_clients > partition_cfg.num_clients
        ):
            mt.fail("K", "must be <= partition.num_clients")

    schedule_cfg = None
    sc = root.section("schedule")
    if sc is not None:
        schedule_cfg = ScheduleConfig(
            rounds=sc.value("rounds", int, check=lambda v: v >= 0, describe="must be >= 0"),
            warmup_epochs=sc.value(
                "warmup_epochs",
                int,
                required=False,
                default=6,
                check=lambda v: v >= 0,
                describe="must be >= 0",
            ),
            eval_every=sc.value(
                "eval_every",
                int,
                required=False,
                default=5,
                check=lambda v: v >= 1,
                describe="must be >= 1",
            ),
            checkpoint_every=sc.value(
                "checkpoint_every",
                int,
                required=False,
                default=0,
                check=lambda v: v >= 0,
                describe="must be >= 0",
            ),
        )
        sc.reject_unknown()

    master_seed = root.value("master_seed", int)
    root.reject_unknown()

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        dataset=dataset_cfg,
        partition=partition_cfg,
        model=model_cfg,
        training=training_cfg,
        method=method_cfg,
        schedule=schedule_cfg,
        master_seed=master_seed,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([f"(file): not valid JSON ({exc})"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["(file): top level must be an object"])
    return parse_config(doc)


def with_roles(cfg: ExperimentConfig, num_labeled: int, num_unlabeled: int) -> ExperimentConfig:
    """Copy of the config with a different labeled/unlabeled split."""
    roles = RolesConfig(num_labeled=num_labeled, num_unlabeled=num_unlabeled)
    return replace(cfg, partition=replace(cfg.partition, roles=roles))
