"""Deterministic simulator for federated semi-supervised learning.

Implements random-subsampling consensus aggregation with distance
reweighting, plus data-size-weighted and weight-adjusted averaging
baselines, over a from-scratch MLP on synthetic non-IID client shards.
"""

from .aggregation import (
    WeightedModel,
    consensus_mean,
    dma_aggregate,
    dma_weights,
    fedavg,
    model_distance,
    weight_adjusted_avg,
)
from .config import ConfigError, ExperimentConfig, MethodKind, load_config, parse_config
from .data import (
    AugmentationSpec,
    ClientRole,
    Dataset,
    PartitionPlan,
    assign_roles,
    augment,
    dirichlet_partition,
    dump_partition,
    load_partition,
    make_blobs,
    split_train_test,
)
from .metrics import MetricsReport, evaluate
from .nn import (
    ModelSpec,
    ParamVector,
    Prediction,
    backprop,
    ema_update,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    loss_ce,
    loss_mse_consistency,
    save_checkpoint,
    sgd_step,
    sharpen,
)
from .orchestrator import (
    RoundRecord,
    SimState,
    SubsetDraw,
    build_simulation,
    draw_subsets,
    run_experiment,
    run_round_baseline,
    run_round_rscfed,
)
from .seeding import derive_seed, rng_for
from .training import ClientState, LocalTrainConfig, train_labeled, train_partial, train_unlabeled, warmup

__version__ = "0.1.0"
