"""Training loop, optimizers, and multi-seed aggregation.

Each run owns a stream tree rooted at its seed: "init" for parameter init,
"data" for batch shuffling, "mix" for everything the mixing step consumes
(the per-batch coin included). Because the mix stream is private, runs that
differ only in mixing settings share identical inits and batch orders, and a
run that never mixes (algorithm "none", or mix_prob 0) follows the exact
no-mixing trajectory bit for bit. Validation runs at every epoch end with
mixing disabled; early stopping tracks validation MAE and the best epoch's
parameters are returned.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError, TrainingAbort
from .metrics import MetricReport, compute_metrics
from .mixing import MixConfig, ModalBatch, maybe_mix
from .model import ModelConfig, ModelParams, backward, encode, init_params, predict
from .rng import RngStream
from .synthdata import Dataset
from .util import canonical_hash

ALGORITHMS = ("none", "powmix", "multimix", "manifold")
OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    lr: float = 0.003
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 12
    algorithm: str = "powmix"
    manifold_alpha: float = 1.0
    loss_on_original: bool = False
    seed: int = 1
    mix: MixConfig = field(default_factory=MixConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if not np.isfinite(self.lr) or self.lr < 0.0:
            raise ParameterError(f"lr must be finite and >= 0, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.algorithm not in ALGORITHMS:
            raise ParameterError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.patience < 0:
            raise ParameterError(f"patience must be >= 0, got {self.patience}")
        if self.manifold_alpha <= 0.0:
            raise ParameterError(f"manifold_alpha must be > 0, got {self.manifold_alpha}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val: MetricReport
    mixing_steps: int


@dataclass
class TrainResult:
    records: list
    best_epoch: int
    best_val_mae: float
    params: ModelParams
    total_steps: int
    wall_time_s: float
    config_hash: str


def config_hash(cfg: TrainConfig) -> str:
    return canonical_hash(cfg)


def init_optimizer_state(cfg: TrainConfig, params: ModelParams) -> dict:
    if cfg.optimizer == "sgd":
        return {"kind": "sgd"}
    zeros = lambda: {k: np.zeros_like(v) for k, v in params.tensors.items()}
    return {"kind": "adam", "t": 0, "m": zeros(), "v": zeros()}


def optimizer_step(params: ModelParams, grads: dict, state: dict, cfg: TrainConfig):
    """One in-place update; returns (params, state)."""
    if state["kind"] == "sgd":
        for k, g in grads.items():
            params.tensors[k] -= cfg.lr * g
        return params, state
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for k, g in grads.items():
        m = state["m"][k]
        v = state["v"][k]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        params.tensors[k] -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
    return params, state


def train(dataset: Dataset, params: ModelParams, cfg: TrainConfig, rng: RngStream) -> TrainResult:
    """Train `params` on the dataset's train split; returns the best-epoch state."""
    started = time.perf_counter()
    cfg_hash = config_hash(cfg)
    data_rng = rng.split("data")
    mix_rng = rng.split("mix")

    xs_train = dataset.features_for("train")
    y_train = dataset.labels_for("train")
    xs_val = dataset.features_for("val")
    y_val = dataset.labels_for("val")
    n_train = y_train.shape[0]
    if n_train < 1 or y_val.shape[0] < 1:
        raise ParameterError("dataset needs non-empty train and val splits")

    # Manifold mixing interpolates between batch halves, so batches are drawn
    # at twice the configured size; an odd-sized remainder passes through.
    draw_size = cfg.batch_size * (2 if cfg.algorithm == "manifold" else 1)

    opt_state = init_optimizer_state(cfg, params)
    records = []
    best_mae = float("inf")
    best_params = params.copy()
    best_epoch = -1
    bad_epochs = 0
    step = 0

    for epoch in range(cfg.epochs):
        perm = data_rng.gen.permutation(n_train)
        loss_sum = 0.0
        row_sum = 0
        mixing_steps = 0
        for start in range(0, n_train, draw_size):
            sel = perm[start:start + draw_size]
            xs = [x[sel] for x in xs_train]
            y = y_train[sel]
            algo = cfg.algorithm
            if algo == "manifold" and sel.size % 2 != 0:
                algo = "none"
            hs = encode(params, xs)
            mixed = maybe_mix(ModalBatch(tuple(hs), y), cfg.mix, algo, epoch,
                              mix_rng, cfg.manifold_alpha)
            if mixed.is_passthrough:
                loss, grads = backward(params, xs, y, None)
                rows = int(y.size)
            else:
                mixing_steps += 1
                loss, grads = backward(params, xs, mixed.labels, mixed.mix_matrices)
                rows = mixed.n_rows
                if cfg.loss_on_original:
                    orig_loss, orig_grads = backward(params, xs, y, None)
                    loss += orig_loss
                    for k in grads:
                        grads[k] += orig_grads[k]
            if not np.isfinite(loss):
                raise TrainingAbort(
                    f"non-finite training loss at step {step} (config {cfg_hash})"
                )
            optimizer_step(params, grads, opt_state, cfg)
            loss_sum += loss * rows
            row_sum += rows
            step += 1

        val_report = compute_metrics(predict(params, xs_val), y_val)
        records.append(EpochRecord(epoch, loss_sum / row_sum, val_report, mixing_steps))
        if val_report.mae < best_mae:
            best_mae = val_report.mae
            best_params = params.copy()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience > 0:
                break

    return TrainResult(records, best_epoch, best_mae, best_params, step,
                       time.perf_counter() - started, cfg_hash)


@dataclass
class SeedRun:
    seed: int
    result: TrainResult
    test: MetricReport


@dataclass
class SeedsResult:
    runs: list
    aggregate: dict  # metric name -> (mean, std) over seeds, ddof=0


def run_single(dataset: Dataset, cfg: TrainConfig) -> SeedRun:
    """Init and train one seed, then score the best checkpoint on test."""
    root = RngStream(cfg.seed)
    params = init_params(dataset.dims, cfg.model, root.split("init"))
    result = train(dataset, params, cfg, root)
    test_report = compute_metrics(
        predict(result.params, dataset.features_for("test")), dataset.labels_for("test")
    )
    return SeedRun(cfg.seed, result, test_report)


def _seed_task(args):
    dataset, cfg, seed = args
    return run_single(dataset, replace(cfg, seed=seed))


def run_seeds(dataset: Dataset, cfg: TrainConfig, seeds, jobs: int = 1) -> SeedsResult:
    """Paired-seed runs: seed k uses identical init/data streams across configs.

    Aggregates are computed over seed-sorted runs so a permuted seed list
    yields bit-identical means and (population) standard deviations.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ParameterError("run_seeds needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ParameterError(f"duplicate seeds: {seeds}")
    tasks = [(dataset, cfg, s) for s in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(seeds))) as pool:
            runs = list(pool.map(_seed_task, tasks))
    else:
        runs = [_seed_task(t) for t in tasks]

    ordered = sorted(runs, key=lambda r: r.seed)
    aggregate = {}
    for name in ("mae", "corr", "acc2", "f1", "acc5", "acc7"):
        vals = np.array([getattr(r.test, name) for r in ordered])
        aggregate[name] = (float(np.mean(vals)), float(np.std(vals)))
    return SeedsResult(runs, aggregate)
