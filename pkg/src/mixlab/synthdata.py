"""Synthetic multimodal regression data with controllable modality quality.

A scalar latent z ~ U(lo, hi) drives every modality: modality m observes
tanh(z * w_m + b_m) plus Gaussian noise whose scale sigma_m = (1 - rho_m) / rho_m
shrinks to 0 as the informativeness rho_m approaches 1. Labels are z plus
truncated Gaussian noise, so they stay within [lo - 3*sigma_y, hi + 3*sigma_y]
by construction. Examples are split 70/10/20 by a seeded permutation, making
split membership a pure function of (seed, index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, ParameterError
from .numerics import sample_uniform
from .rng import RngStream

_SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class DataGenConfig:
    n_examples: int = 2000
    dims: tuple = (16, 8, 8)
    rho: tuple = (0.9, 0.4, 0.4)
    label_range: tuple = (-3.0, 3.0)
    sigma_y: float = 0.1
    seed: int = 7

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "rho", tuple(float(r) for r in self.rho))
        object.__setattr__(self, "label_range", tuple(float(v) for v in self.label_range))
        if self.n_examples < 10:
            raise ParameterError(f"n_examples must be >= 10, got {self.n_examples}")
        if len(self.dims) < 1 or any(d < 1 for d in self.dims):
            raise ParameterError(f"dims must be positive, got {self.dims}")
        if len(self.rho) != len(self.dims):
            raise ParameterError(
                f"rho has {len(self.rho)} entries for {len(self.dims)} modalities"
            )
        if any(not 0.0 < r <= 1.0 for r in self.rho):
            raise ParameterError(f"rho entries must lie in (0, 1], got {self.rho}")
        if len(self.label_range) != 2 or not self.label_range[0] < self.label_range[1]:
            raise ParameterError(f"label_range must be (lo, hi) with lo < hi, got {self.label_range}")
        if self.sigma_y < 0.0:
            raise ParameterError(f"sigma_y must be >= 0, got {self.sigma_y}")


@dataclass(frozen=True)
class Dataset:
    """Feature matrices per modality, labels, and a split tag per example."""

    features: tuple
    labels: np.ndarray
    split: np.ndarray
    label_range: tuple

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(np.asarray(x, dtype=np.float64) for x in self.features))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.float64))
        object.__setattr__(self, "split", np.asarray(self.split, dtype="<U5"))
        object.__setattr__(self, "label_range", tuple(float(v) for v in self.label_range))

    @property
    def n_examples(self) -> int:
        return self.labels.shape[0]

    @property
    def dims(self) -> tuple:
        return tuple(x.shape[1] for x in self.features)

    def indices(self, split_name: str) -> np.ndarray:
        if split_name not in _SPLIT_NAMES:
            raise ParameterError(f"unknown split {split_name!r}")
        return np.flatnonzero(self.split == split_name)

    def features_for(self, split_name: str) -> list:
        idx = self.indices(split_name)
        return [x[idx] for x in self.features]

    def labels_for(self, split_name: str) -> np.ndarray:
        return self.labels[self.indices(split_name)]


def generate(cfg: DataGenConfig) -> Dataset:
    """Generate a dataset; bit-identical for identical configs."""
    root = RngStream(cfg.seed)
    lo, hi = cfg.label_range
    n = cfg.n_examples
    z = sample_uniform(lo, hi, n, root.split("latent"))

    proj = root.split("projection")
    noise = root.split("noise")
    features = []
    for m, (d, rho) in enumerate(zip(cfg.dims, cfg.rho)):
        slope = sample_uniform(0.3, 1.1, d, proj)
        sign = np.where(proj.gen.random(d) < 0.5, -1.0, 1.0)
        offset = sample_uniform(-2.0, 2.0, d, proj)
        clean = np.tanh(z[:, None] * (slope * sign)[None, :] + offset[None, :])
        sigma = (1.0 - rho) / rho
        features.append(clean + sigma * noise.gen.standard_normal((n, d)))

    eps = np.clip(root.split("label").gen.standard_normal(n), -3.0, 3.0)
    labels = z + cfg.sigma_y * eps

    perm = root.split("split").gen.permutation(n)
    n_train = int(n * 0.7)
    n_val = int(n * 0.1)
    split = np.empty(n, dtype="<U5")
    split[perm[:n_train]] = "train"
    split[perm[n_train:n_train + n_val]] = "val"
    split[perm[n_train + n_val:]] = "test"
    return Dataset(tuple(features), labels, split, cfg.label_range)


def subsample_train(dataset: Dataset, keep, rng: RngStream) -> Dataset:
    """Shrink the train split to `keep` examples (int count or float fraction).

    Validation and test rows are untouched; dropped train rows are removed
    entirely, so splits stay disjoint and exhaustive. The selection is drawn
    from `rng`, making the subset a pure function of the stream.
    """
    train_idx = dataset.indices("train")
    n_train = train_idx.size
    if isinstance(keep, float):
        if not 0.0 < keep <= 1.0:
            raise ParameterError(f"fraction must lie in (0, 1], got {keep}")
        count = max(1, int(round(keep * n_train)))
    else:
        count = int(keep)
    if not 1 <= count <= n_train:
        raise ParameterError(f"cannot keep {count} of {n_train} train examples")
    chosen = rng.gen.choice(n_train, size=count, replace=False)
    keep_mask = np.ones(dataset.n_examples, dtype=bool)
    keep_mask[train_idx] = False
    keep_mask[train_idx[np.sort(chosen)]] = True
    return Dataset(
        tuple(x[keep_mask] for x in dataset.features),
        dataset.labels[keep_mask],
        dataset.split[keep_mask],
        dataset.label_range,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_csv(dataset: Dataset, path) -> None:
    """Write the documented CSV form: header line, then one row per example.

    Header: `modality_dims=16;8;8,label_range=-3;3`. Each row holds every
    modality's features in modality order, the label, and the split tag,
    floats at 17 significant digits (lossless for float64).
    """
    dims = ";".join(str(d) for d in dataset.dims)
    rng_txt = ";".join(_fmt(v) for v in dataset.label_range)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"modality_dims={dims},label_range={rng_txt}\n")
        stacked = np.concatenate(dataset.features, axis=1)
        for i in range(dataset.n_examples):
            cells = [_fmt(v) for v in stacked[i]]
            cells.append(_fmt(dataset.labels[i]))
            cells.append(str(dataset.split[i]))
            fh.write(",".join(cells) + "\n")


def load_csv(path) -> Dataset:
    """Parse a dataset CSV, raising DataFormatError with line/field context."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split(",")
        if len(parts) != 2 or not parts[0].startswith("modality_dims=") \
                or not parts[1].startswith("label_range="):
            raise DataFormatError(f"line 1: malformed header {header!r}")
        try:
            dims = tuple(int(t) for t in parts[0][len("modality_dims="):].split(";"))
            rng_vals = tuple(float(t) for t in parts[1][len("label_range="):].split(";"))
        except ValueError as exc:
            raise DataFormatError(f"line 1: unparseable header {header!r}: {exc}") from None
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise DataFormatError(f"line 1: invalid modality_dims {dims}")
        if len(rng_vals) != 2:
            raise DataFormatError(f"line 1: label_range needs 2 values, got {len(rng_vals)}")

        total = sum(dims)
        rows, labels, tags = [], [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != total + 2:
                raise DataFormatError(
                    f"line {lineno}: expected {total + 2} fields, got {len(cells)}"
                )
            try:
                rows.append([float(c) for c in cells[:total]])
                labels.append(float(cells[total]))
            except ValueError as exc:
                raise DataFormatError(f"line {lineno}: unparseable number: {exc}") from None
            tag = cells[total + 1]
            if tag not in _SPLIT_NAMES:
                raise DataFormatError(f"line {lineno}: unknown split tag {tag!r}")
            tags.append(tag)

    if not rows:
        raise DataFormatError("dataset has a header but no rows")
    stacked = np.asarray(rows, dtype=np.float64)
    offsets = np.cumsum((0,) + dims)
    features = tuple(stacked[:, offsets[m]:offsets[m + 1]] for m in range(len(dims)))
    return Dataset(features, np.asarray(labels), np.asarray(tags, dtype="<U5"), rng_vals)
