"""Latent-space mixing regularizers for multimodal batches.

Three algorithms over per-modality hidden batches H_m (B x d_m):

* powmix: per-modality Dirichlet mixing matrices, column-reweighted by
  modality attention, sparsified by a dynamic Bernoulli subset mask, rows
  renormalized to the simplex. Labels mix per modality and average.
* multimix: one shared Dirichlet mixing matrix across modalities.
* manifold_mixup: pairwise Beta(alpha, alpha) interpolation between the two
  halves of an even batch, one coefficient per pair shared across modalities.

Every algorithm returns a MixedBatch whose rows are convex combinations of
batch rows: mixed hiddens are mix_matrices[m] @ H_m and mixed labels are
mix_matrices[m] @ y, with row-stochastic mix matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeMismatchError
from .numerics import (
    matmul,
    sample_beta,
    sample_bernoulli_matrix,
    sample_dirichlet_rows,
    sample_uniform,
)
from .rng import RngStream

# Shared-matrix Dirichlet concentration range used by multimix and by powmix
# defaults; both algorithms draw per-row concentrations uniformly from it.
ALPHA_LO_DEFAULT = 0.5
ALPHA_HI_DEFAULT = 2.0


@dataclass(frozen=True)
class ModalBatch:
    """Aligned per-modality hidden batches plus regression labels.

    hiddens[m] has shape (B, d_m); labels has shape (B,). All modalities
    share the batch axis: row i is the same underlying example everywhere.
    """

    hiddens: tuple
    labels: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        hs = tuple(np.asarray(h, dtype=np.float64) for h in self.hiddens)
        if len(hs) < 1:
            raise ParameterError("ModalBatch needs at least one modality")
        labels = np.asarray(self.labels, dtype=np.float64)
        if labels.ndim != 1:
            raise ShapeMismatchError(f"labels must be 1-D, got shape {labels.shape}")
        b = labels.shape[0]
        if b < 1:
            raise ParameterError("ModalBatch needs at least one example")
        for m, h in enumerate(hs):
            if h.ndim != 2 or h.shape[0] != b:
                raise ShapeMismatchError(
                    f"modality {m} hiddens shape {h.shape} incompatible with batch size {b}"
                )
            if not np.all(np.isfinite(h)):
                raise ParameterError(f"modality {m} hiddens contain non-finite entries")
        if not np.all(np.isfinite(labels)):
            raise ParameterError("labels contain non-finite entries")
        names = tuple(self.names) if self.names else tuple(f"m{m}" for m in range(len(hs)))
        if len(names) != len(hs):
            raise ShapeMismatchError(
                f"{len(names)} modality names for {len(hs)} modalities"
            )
        object.__setattr__(self, "hiddens", hs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "names", names)

    @property
    def batch_size(self) -> int:
        return self.labels.shape[0]

    @property
    def n_modalities(self) -> int:
        return len(self.hiddens)


@dataclass(frozen=True)
class MixConfig:
    """Mixing hyperparameters and component toggles.

    n_mixed: number of generated mixed examples per batch.
    mix_prob: per-batch probability that mixing is applied at all.
    alpha_lo/alpha_hi: range of the per-row Dirichlet concentration draws.
    subset_lo/subset_hi: range of the per-entry expected subset size; entry
        success probability is clamp(draw / B, 0, 1).
    anisotropic: per-modality mixing matrices instead of one shared matrix.
    reweight: scale mixing-matrix columns by modality attention.
    mask_share: one subset mask shared across modalities.
    dynamic_mix: enable subset masking at all (off means all-ones mask and
        mask_share is ignored).
    warmup_epochs: epochs at the start of training with mixing disabled.
    """

    n_mixed: int = 256
    mix_prob: float = 1.0
    alpha_lo: float = ALPHA_LO_DEFAULT
    alpha_hi: float = ALPHA_HI_DEFAULT
    subset_lo: float = 2.0
    subset_hi: float = 4.0
    anisotropic: bool = True
    reweight: bool = True
    mask_share: bool = True
    dynamic_mix: bool = True
    warmup_epochs: int = 2

    def __post_init__(self):
        if self.n_mixed < 1:
            raise ParameterError(f"n_mixed must be >= 1, got {self.n_mixed}")
        if not 0.0 <= self.mix_prob <= 1.0:
            raise ParameterError(f"mix_prob must lie in [0, 1], got {self.mix_prob}")
        if not (0.0 < self.alpha_lo <= self.alpha_hi):
            raise ParameterError(
                f"need 0 < alpha_lo <= alpha_hi, got [{self.alpha_lo}, {self.alpha_hi}]"
            )
        if not (0.0 < self.subset_lo <= self.subset_hi):
            raise ParameterError(
                f"need 0 < subset_lo <= subset_hi, got [{self.subset_lo}, {self.subset_hi}]"
            )
        if self.warmup_epochs < 0:
            raise ParameterError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")


@dataclass(frozen=True)
class MixedBatch:
    """Output of a mixing algorithm (or a pass-through).

    hiddens[m] = mix_matrices[m] @ original hiddens[m], shape (n, d_m).
    labels: unified mixed labels, the modality average for powmix.
    modality_labels[m]: per-modality mixed labels (diagnostics).
    mix_matrices[m]: row-stochastic (n, B) matrices (property tests).
    algorithm: "powmix" | "multimix" | "manifold" | "passthrough".
    """

    hiddens: tuple
    labels: np.ndarray
    modality_labels: tuple
    mix_matrices: tuple
    algorithm: str

    @property
    def n_rows(self) -> int:
        return self.labels.shape[0]

    @property
    def is_passthrough(self) -> bool:
        return self.algorithm == "passthrough"


def attention_weights(batch: ModalBatch) -> np.ndarray:
    """Per-example modality attention, shape (M, B).

    a[m, i] = relu(mean_j H_m[i, j]) normalized over modalities. Examples
    where every modality's row mean is non-positive fall back to uniform 1/M.
    """
    means = np.stack([h.mean(axis=1) if h.shape[1] else np.zeros(batch.batch_size) for h in batch.hiddens])
    pos = np.maximum(means, 0.0)
    denom = pos.sum(axis=0)
    safe = np.where(denom > 0.0, denom, 1.0)
    uniform = 1.0 / batch.n_modalities
    return np.where(denom > 0.0, pos / safe, uniform)


def _uniform_or_const(lo: float, hi: float, n: int, rng: RngStream) -> np.ndarray:
    # Config ranges allow lo == hi (degenerate constant); sample_uniform does not.
    if lo == hi:
        return np.full(int(n), float(lo))
    return sample_uniform(lo, hi, n, rng)


def sample_mixing_matrices(cfg: MixConfig, batch_size: int, n_modalities: int, rng: RngStream) -> list:
    """Dirichlet mixing matrices, one per modality.

    Row i of each matrix is a Dirichlet(alpha_i * 1_B) draw with its own
    concentration alpha_i ~ U(alpha_lo, alpha_hi). Anisotropic mode samples
    per modality in modality order; otherwise one matrix is drawn and the
    returned list repeats the same array object M times.
    """
    if batch_size < 1 or n_modalities < 1:
        raise ParameterError("batch_size and n_modalities must be >= 1")

    def draw():
        alphas = _uniform_or_const(cfg.alpha_lo, cfg.alpha_hi, cfg.n_mixed, rng)
        return sample_dirichlet_rows(alphas, batch_size, rng)

    if cfg.anisotropic:
        return [draw() for _ in range(n_modalities)]
    shared = draw()
    return [shared] * n_modalities


def sample_dynamic_mask(cfg: MixConfig, batch_size: int, n_modalities: int, rng: RngStream) -> list:
    """Binary subset masks, one per modality.

    Entry success probability is clamp(P_ij / B, 0, 1) with
    P_ij ~ U(subset_lo, subset_hi) resampled per entry. All-zero rows are
    repaired by setting one uniformly-random entry to 1, so every mixed row
    keeps at least one source example. With dynamic_mix off the mask is
    all-ones (and mask_share is ignored); with mask_share on a single mask
    is drawn and the returned list repeats the same array object.
    """
    if batch_size < 1 or n_modalities < 1:
        raise ParameterError("batch_size and n_modalities must be >= 1")
    n = cfg.n_mixed
    if not cfg.dynamic_mix:
        ones = np.ones((n, batch_size))
        return [ones] * n_modalities

    def draw():
        intensity = _uniform_or_const(cfg.subset_lo, cfg.subset_hi, n * batch_size, rng)
        prob = np.clip(intensity.reshape(n, batch_size) / batch_size, 0.0, 1.0)
        mask = sample_bernoulli_matrix(prob, rng)
        for i in np.flatnonzero(mask.sum(axis=1) == 0.0):
            mask[i, int(rng.gen.integers(batch_size))] = 1.0
        return mask

    if cfg.mask_share:
        shared = draw()
        return [shared] * n_modalities
    return [draw() for _ in range(n_modalities)]


def reweighted_mixing_matrix(lam: np.ndarray, attention: np.ndarray, mask: np.ndarray,
                             rng: RngStream | None = None) -> np.ndarray:
    """Row-normalized attention-and-mask weighted mixing matrix.

    out[i, j] proportional to attention[j] * mask[i, j] * lam[i, j], each row
    renormalized to sum 1. Degenerate rows fall back in two stages: a row
    whose weighted sum is 0 renormalizes mask * lam alone; if that is still 0
    (unreachable after mask repair given positive Dirichlet rows, but
    guarded) the row becomes one-hot at a uniformly-random column, or column
    0 when no rng is supplied.
    """
    lam = np.asarray(lam, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    att = np.asarray(attention, dtype=np.float64)
    if lam.shape != mask.shape:
        raise ShapeMismatchError(f"lam shape {lam.shape} vs mask shape {mask.shape}")
    if att.shape != (lam.shape[1],):
        raise ShapeMismatchError(
            f"attention shape {att.shape} incompatible with matrix shape {lam.shape}"
        )
    w = att[None, :] * mask * lam
    s = w.sum(axis=1)
    good = s > 0.0
    out = np.empty_like(w)
    out[good] = w[good] / s[good, None]
    for i in np.flatnonzero(~good):
        fallback = mask[i] * lam[i]
        fs = fallback.sum()
        if fs > 0.0:
            out[i] = fallback / fs
        else:
            out[i] = 0.0
            j = int(rng.gen.integers(lam.shape[1])) if rng is not None else 0
            out[i, j] = 1.0
    return out


def powmix(batch: ModalBatch, cfg: MixConfig, rng: RngStream) -> MixedBatch:
    """Attention-reweighted, subset-masked Dirichlet mixing.

    Draw order on `rng` is fixed: mixing matrices first (alphas then
    Dirichlet rows, per modality when anisotropic), then subset masks, then
    any degenerate-row repairs. Attention consumes no randomness.

    With reweight and anisotropic both off the per-modality mixed labels
    coincide, the modality average is a no-op (labels is modality_labels[0]
    itself) and, with dynamic_mix also off, the output matches multimix
    drawn from the same stream state bit for bit.
    """
    n_mod = batch.n_modalities
    if cfg.reweight:
        att = attention_weights(batch)
    else:
        att = np.full((n_mod, batch.batch_size), 1.0 / n_mod)
    lams = sample_mixing_matrices(cfg, batch.batch_size, n_mod, rng)
    masks = sample_dynamic_mask(cfg, batch.batch_size, n_mod, rng)

    def tilde(lam, a, mask):
        if not cfg.reweight and not cfg.dynamic_mix:
            return lam  # uniform attention and all-ones mask: reweighting is the identity
        return reweighted_mixing_matrix(lam, a, mask, rng=rng)

    shared = (not cfg.anisotropic) and (not cfg.reweight) and (cfg.mask_share or not cfg.dynamic_mix)
    if shared:
        mats = [tilde(lams[0], att[0], masks[0])] * n_mod
    else:
        mats = [tilde(lams[m], att[m], masks[m]) for m in range(n_mod)]

    hiddens = tuple(matmul(mats[m], batch.hiddens[m]) for m in range(n_mod))
    if shared:
        y0 = matmul(mats[0], batch.labels)
        mod_labels = (y0,) * n_mod
        labels = y0
    else:
        mod_labels = tuple(matmul(mats[m], batch.labels) for m in range(n_mod))
        labels = sum(mod_labels) / n_mod
    return MixedBatch(hiddens, labels, mod_labels, tuple(mats), "powmix")


def multimix(batch: ModalBatch, n_mixed: int, rng: RngStream,
             alpha_lo: float = ALPHA_LO_DEFAULT, alpha_hi: float = ALPHA_HI_DEFAULT) -> MixedBatch:
    """One shared Dirichlet mixing matrix applied to every modality."""
    if n_mixed < 1:
        raise ParameterError(f"n_mixed must be >= 1, got {n_mixed}")
    alphas = _uniform_or_const(alpha_lo, alpha_hi, n_mixed, rng)
    lam = sample_dirichlet_rows(alphas, batch.batch_size, rng)
    hiddens = tuple(matmul(lam, h) for h in batch.hiddens)
    labels = matmul(lam, batch.labels)
    mod_labels = (labels,) * batch.n_modalities
    return MixedBatch(hiddens, labels, mod_labels, (lam,) * batch.n_modalities, "multimix")


def manifold_mixup(batch: ModalBatch, alpha: float, rng: RngStream,
                   lam_values=None) -> MixedBatch:
    """Pairwise Beta(alpha, alpha) interpolation between batch halves.

    Requires an even batch; pair i interpolates rows i and i + B/2 with one
    coefficient shared across modalities, yielding B/2 mixed rows.
    `lam_values` overrides the Beta draws (test hook).
    """
    b = batch.batch_size
    if b % 2 != 0:
        raise ParameterError(f"manifold mixup needs an even batch, got {b}")
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise ParameterError(f"manifold mixup alpha must be finite and > 0, got {alpha}")
    half = b // 2
    if lam_values is None:
        lam = np.array([sample_beta(alpha, alpha, rng) for _ in range(half)])
    else:
        lam = np.asarray(lam_values, dtype=np.float64)
        if lam.shape != (half,):
            raise ShapeMismatchError(f"lam_values must have shape ({half},), got {lam.shape}")
        if np.any(lam < 0.0) or np.any(lam > 1.0):
            raise ParameterError("lam_values must lie in [0, 1]")
    mat = np.zeros((half, b))
    idx = np.arange(half)
    mat[idx, idx] = lam
    mat[idx, idx + half] = 1.0 - lam
    hiddens = tuple(matmul(mat, h) for h in batch.hiddens)
    labels = matmul(mat, batch.labels)
    mod_labels = (labels,) * batch.n_modalities
    return MixedBatch(hiddens, labels, mod_labels, (mat,) * batch.n_modalities, "manifold")


def passthrough(batch: ModalBatch) -> MixedBatch:
    """Degenerate MixedBatch: original rows, identity mixing matrices."""
    eye = np.eye(batch.batch_size)
    mod_labels = (batch.labels,) * batch.n_modalities
    return MixedBatch(batch.hiddens, batch.labels, mod_labels,
                      (eye,) * batch.n_modalities, "passthrough")


def maybe_mix(batch: ModalBatch, cfg: MixConfig, algorithm: str, epoch: int,
              rng: RngStream, manifold_alpha: float = 1.0) -> MixedBatch:
    """Dispatch one mixing step, honoring warmup and the mix_prob coin.

    Returns a pass-through when algorithm is "none", during warmup epochs,
    or when the per-batch Bernoulli(mix_prob) coin comes up tails. The coin
    is drawn from `rng` only after the warmup/none checks, so configurations
    that never mix consume no randomness here.
    """
    if algorithm not in ("none", "powmix", "multimix", "manifold"):
        raise ParameterError(f"unknown mixing algorithm: {algorithm!r}")
    if algorithm == "none" or epoch < cfg.warmup_epochs:
        return passthrough(batch)
    if rng.gen.random() >= cfg.mix_prob:
        return passthrough(batch)
    if algorithm == "powmix":
        return powmix(batch, cfg, rng)
    if algorithm == "multimix":
        return multimix(batch, cfg.n_mixed, rng)
    return manifold_mixup(batch, manifold_alpha, rng)
