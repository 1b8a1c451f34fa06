"""Evaluation protocols: noise robustness, modality probes, limited data.

Noise kinds (p is the corruption probability, drawn per the kind's unit):

* feature_drop_aligned: zero feature coordinates with probability p, the
  zero-pattern shared across modalities per example. Modalities may have
  different widths, so one uniform field over the widest modality is drawn
  and each modality uses its leading columns; coordinates that coexist in
  two modalities are dropped together.
* feature_drop_independent: same marginal drop rate, fresh pattern per
  modality.
* text_drop: with probability p per example, zero the target modality's
  whole feature vector.
* text_mean_replace: with probability p per example, replace the target
  modality's features with the train-split mean vector.

All protocol randomness comes from per-(kind, p, run) child streams, so any
subset of the grid reproduces the full grid's values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .metrics import MetricReport, average_reports, compute_metrics
from .model import ModelParams, encode, predict
from .rng import RngStream
from .synthdata import Dataset, subsample_train
from .training import SeedsResult, TrainConfig, run_seeds

NOISE_KINDS = (
    "feature_drop_aligned",
    "feature_drop_independent",
    "text_drop",
    "text_mean_replace",
)

ROBUSTNESS_GRID = tuple(round(0.05 * k, 2) for k in range(1, 9))  # 0.05 .. 0.40
LIMITED_FRACTIONS = (0.1, 0.2, 0.3, 0.5, 0.8, 1.0)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    p: float
    modality: int = 0  # target of text_drop / text_mean_replace

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"noise probability must lie in [0, 1], got {self.p}")
        if self.modality < 0:
            raise ParameterError(f"modality index must be >= 0, got {self.modality}")


def apply_noise(features, spec: NoiseSpec, train_means, rng: RngStream) -> list:
    """Corrupted copies of per-modality feature matrices."""
    xs = [np.asarray(x, dtype=np.float64) for x in features]
    n = xs[0].shape[0]
    if any(x.shape[0] != n for x in xs):
        raise ParameterError("all modalities must have the same number of rows")
    if spec.kind in ("text_drop", "text_mean_replace") and spec.modality >= len(xs):
        raise ParameterError(
            f"noise targets modality {spec.modality}, batch has {len(xs)}"
        )
    if spec.kind == "feature_drop_aligned":
        field = rng.gen.random((n, max(x.shape[1] for x in xs)))
        return [x * (field[:, : x.shape[1]] >= spec.p) for x in xs]
    if spec.kind == "feature_drop_independent":
        return [x * (rng.gen.random(x.shape) >= spec.p) for x in xs]
    selected = rng.gen.random(n) < spec.p
    out = [x.copy() for x in xs]
    if spec.kind == "text_drop":
        out[spec.modality][selected] = 0.0
        return out
    if train_means is None:
        raise ParameterError("text_mean_replace needs train-split mean vectors")
    mean = np.asarray(train_means[spec.modality], dtype=np.float64)
    if mean.shape != (xs[spec.modality].shape[1],):
        raise ParameterError(
            f"train mean shape {mean.shape} does not match modality width "
            f"{xs[spec.modality].shape[1]}"
        )
    out[spec.modality][selected] = mean
    return out


def train_feature_means(dataset: Dataset) -> list:
    return [x.mean(axis=0) for x in dataset.features_for("train")]


@dataclass(frozen=True)
class NoiseCell:
    kind: str
    p: float
    run: int
    report: MetricReport


def robustness_curve(params: ModelParams, dataset: Dataset, kinds, p_grid,
                     n_runs: int, rng: RngStream, split: str = "test",
                     modality: int = 0) -> list:
    """Evaluate one checkpoint under every (kind, p, run) grid cell."""
    if n_runs < 1:
        raise ParameterError(f"n_runs must be >= 1, got {n_runs}")
    for kind in kinds:
        if kind not in NOISE_KINDS:
            raise ParameterError(f"unknown noise kind {kind!r}")
    xs = dataset.features_for(split)
    labels = dataset.labels_for(split)
    means = train_feature_means(dataset)
    cells = []
    for kind in kinds:
        for p in p_grid:
            spec = NoiseSpec(kind, float(p), modality)
            for run in range(n_runs):
                cell_rng = rng.split(kind).split(format(float(p), ".17g")).split(run)
                noisy = apply_noise(xs, spec, means, cell_rng)
                report = compute_metrics(predict(params, noisy), labels)
                cells.append(NoiseCell(kind, float(p), run, report))
    return cells


def curve_by_p(cells) -> dict:
    """Average reports per p across kinds and runs; keys sorted ascending."""
    grouped: dict = {}
    for cell in cells:
        grouped.setdefault(cell.p, []).append(cell.report)
    return {p: average_reports(grouped[p]) for p in sorted(grouped)}


def ridge_fit(h: np.ndarray, y: np.ndarray, penalty: float = 1e-6) -> np.ndarray:
    """Closed-form ridge weights on [H | 1]; returns (d+1,) with intercept last."""
    a = np.concatenate([h, np.ones((h.shape[0], 1))], axis=1)
    gram = a.T @ a + penalty * np.eye(a.shape[1])
    return np.linalg.solve(gram, a.T @ y)


def ridge_predict(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    return h @ w[:-1] + w[-1]


def linear_probe(train_hiddens, train_labels, eval_hiddens, eval_labels,
                 penalty: float = 1e-6) -> list:
    """Per-modality closed-form ridge probes on frozen representations.

    Fits one probe per modality on the train-split representations and
    scores it on the eval split. Constant predictions (e.g. from an all-zero
    representation) surface as corr_defined=False, never an exception.
    """
    reports = []
    for h_tr, h_ev in zip(train_hiddens, eval_hiddens):
        w = ridge_fit(np.asarray(h_tr, dtype=np.float64), np.asarray(train_labels), penalty)
        reports.append(compute_metrics(ridge_predict(np.asarray(h_ev, dtype=np.float64), w),
                                       eval_labels))
    return reports


def probe_checkpoint(params: ModelParams, dataset: Dataset, penalty: float = 1e-6) -> dict:
    """Ridge probes on each modality's encoder output plus fusion-head metrics."""
    h_train = encode(params, dataset.features_for("train"))
    h_test = encode(params, dataset.features_for("test"))
    per_modality = linear_probe(h_train, dataset.labels_for("train"),
                                h_test, dataset.labels_for("test"), penalty)
    fusion = compute_metrics(predict(params, dataset.features_for("test")),
                             dataset.labels_for("test"))
    return {"modalities": per_modality, "fusion": fusion}


@dataclass(frozen=True)
class LimitedCell:
    fraction: float
    algorithm: str
    seed: int
    report: MetricReport


def limited_data_sweep(dataset: Dataset, cfg: TrainConfig, fractions, seeds,
                       jobs: int = 1, baseline: str = "none"):
    """Paired baseline-vs-cfg.algorithm runs at shrinking train fractions.

    The train subset for a fraction is a pure function of (seeds[0],
    fraction) and is shared by both algorithms, so comparisons stay paired.
    Returns (cells, gaps) where gaps[fraction][metric] = (mean, std) of the
    per-seed differences (cfg.algorithm minus baseline).
    """
    seeds = [int(s) for s in seeds]
    cells = []
    gaps = {}
    for fraction in fractions:
        f = float(fraction)
        if not 0.0 < f <= 1.0:
            raise ParameterError(f"fractions must lie in (0, 1], got {fraction}")
        sub_rng = RngStream(seeds[0]).split("subsample").split(format(f, ".17g"))
        sub = dataset if f == 1.0 else subsample_train(dataset, f, sub_rng)
        results = {}
        for algorithm in (baseline, cfg.algorithm):
            res: SeedsResult = run_seeds(sub, replace(cfg, algorithm=algorithm), seeds, jobs)
            results[algorithm] = {run.seed: run.test for run in res.runs}
            for run in res.runs:
                cells.append(LimitedCell(f, algorithm, run.seed, run.test))
        gaps[f] = {}
        for name in ("mae", "corr", "acc2", "f1", "acc5", "acc7"):
            diffs = np.array([
                getattr(results[cfg.algorithm][s], name) - getattr(results[baseline][s], name)
                for s in sorted(seeds)
            ])
            gaps[f][name] = (float(np.mean(diffs)), float(np.std(diffs)))
    return cells, gaps
