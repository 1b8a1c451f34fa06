"""Regression and sentiment-style classification metrics.

All metrics compare a prediction vector against a target vector:

* mae: mean absolute error.
* corr: Pearson correlation; a zero-variance side makes it undefined, which
  is reported explicitly (corr = nan, corr_defined = False), never silently.
* acc2 / f1: binary accuracy and positive-class F1 with sign(value) > 0 as
  the positive class, computed only over examples whose reference value is
  nonzero (neutral exclusion). The reference is the target by default; a
  flag switches to excluding by prediction instead. A weighted-F1 variant
  (support-weighted average of both classes' F1) sits behind another flag.
* acc5 / acc7: clamp to [-2, 2] (resp. [-3, 3]), round to the nearest
  integer bin (ties to even, the numpy convention), report exact-bin match.

Accuracies and F1 live in [0, 1]; the CLI scales them by 100 for display.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeMismatchError

METRIC_FIELDS = ("mae", "corr", "acc2", "f1", "acc5", "acc7")


@dataclass(frozen=True)
class MetricReport:
    mae: float
    corr: float
    corr_defined: bool
    acc2: float
    f1: float
    acc5: float
    acc7: float
    n_binary_included: int
    n_binary_excluded: int

    def as_dict(self) -> dict:
        return {
            "mae": self.mae, "corr": self.corr, "corr_defined": self.corr_defined,
            "acc2": self.acc2, "f1": self.f1, "acc5": self.acc5, "acc7": self.acc7,
            "n_binary_included": self.n_binary_included,
            "n_binary_excluded": self.n_binary_excluded,
        }


def _binary_f1(pred_pos: np.ndarray, target_pos: np.ndarray) -> float:
    tp = float(np.sum(pred_pos & target_pos))
    fp = float(np.sum(pred_pos & ~target_pos))
    fn = float(np.sum(~pred_pos & target_pos))
    denom = 2.0 * tp + fp + fn
    return 2.0 * tp / denom if denom > 0.0 else 0.0


def _bin_acc(pred: np.ndarray, target: np.ndarray, bound: float) -> float:
    pb = np.round(np.clip(pred, -bound, bound))
    tb = np.round(np.clip(target, -bound, bound))
    return float(np.mean(pb == tb))


def compute_metrics(pred, target, exclude_by: str = "target",
                    weighted_f1: bool = False) -> MetricReport:
    """Full metric suite for one prediction/target pair."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.ndim != 1 or p.shape != t.shape:
        raise ShapeMismatchError(f"pred shape {p.shape} vs target shape {t.shape}")
    if p.size == 0:
        raise ParameterError("metrics need at least one example")
    if exclude_by not in ("target", "pred"):
        raise ParameterError(f"exclude_by must be 'target' or 'pred', got {exclude_by!r}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise ParameterError("metrics require finite predictions and targets")

    mae = float(np.mean(np.abs(p - t)))

    pc = p - p.mean()
    tc = t - t.mean()
    denom = np.sqrt(np.sum(pc * pc)) * np.sqrt(np.sum(tc * tc))
    if denom > 0.0:
        corr, corr_defined = float(np.sum(pc * tc) / denom), True
    else:
        corr, corr_defined = float("nan"), False

    ref = t if exclude_by == "target" else p
    included = ref != 0.0
    n_inc = int(included.sum())
    if n_inc > 0:
        pp = p[included] > 0.0
        tp_ = t[included] > 0.0
        acc2 = float(np.mean(pp == tp_))
        if weighted_f1:
            w_pos = float(np.mean(tp_))
            f1 = w_pos * _binary_f1(pp, tp_) + (1.0 - w_pos) * _binary_f1(~pp, ~tp_)
        else:
            f1 = _binary_f1(pp, tp_)
    else:
        acc2, f1 = float("nan"), float("nan")

    return MetricReport(
        mae=mae, corr=corr, corr_defined=corr_defined, acc2=acc2, f1=f1,
        acc5=_bin_acc(p, t, 2.0), acc7=_bin_acc(p, t, 3.0),
        n_binary_included=n_inc, n_binary_excluded=int(p.size - n_inc),
    )


def average_reports(reports) -> MetricReport:
    """Field-wise mean of several reports; corr is nan unless all defined."""
    reports = list(reports)
    if not reports:
        raise ParameterError("cannot average zero reports")
    all_corr = all(r.corr_defined for r in reports)
    mean = lambda vals: float(np.mean(vals))
    return MetricReport(
        mae=mean([r.mae for r in reports]),
        corr=mean([r.corr for r in reports]) if all_corr else float("nan"),
        corr_defined=all_corr,
        acc2=mean([r.acc2 for r in reports]),
        f1=mean([r.f1 for r in reports]),
        acc5=mean([r.acc5 for r in reports]),
        acc7=mean([r.acc7 for r in reports]),
        n_binary_included=int(sum(r.n_binary_included for r in reports)),
        n_binary_excluded=int(sum(r.n_binary_excluded for r in reports)),
    )
