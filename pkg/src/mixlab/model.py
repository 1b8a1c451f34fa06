"""Toy multimodal regressor with hand-rolled exact gradients.

Per-modality encoder: Linear(d_m -> hidden), ReLU, Linear(hidden -> embed).
Fusion head: concat of modality embeddings, Linear(M*embed -> fusion_hidden),
ReLU, Linear(fusion_hidden -> 1).

Two fusion modes:
* "late": each encoder sees only its own modality's features.
* "early": encoder m sees X_m concatenated with the summed shared linear
  projections of the other modalities' raw features, so cross-modal signal
  enters before the encoders.

Mixing plugs in between encode and fusion: given row-stochastic matrices
L_m, the fusion head consumes L_m @ H_m and the loss targets the mixed
labels; the gradient through mixing is L_m^T applied to the fusion-side
gradient. backward() returns gradients that are exact (reverse-mode chain
rule, no approximation) for every tensor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, ParameterError, ShapeMismatchError
from .rng import RngStream

FUSION_MODES = ("late", "early")


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 32
    embed: int = 16
    fusion_hidden: int = 32
    fusion_mode: str = "late"
    cross_dim: int = 8

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ParameterError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        for name in ("hidden", "embed", "fusion_hidden", "cross_dim"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass
class ModelParams:
    """Named parameter tensors plus the architecture they belong to."""

    dims: tuple
    config: ModelConfig
    tensors: dict = field(default_factory=dict)

    @property
    def n_modalities(self) -> int:
        return len(self.dims)

    def n_parameters(self) -> int:
        return sum(int(np.prod(t.shape)) for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, self.config, {k: v.copy() for k, v in self.tensors.items()})


# Gradients share the tensor naming of ModelParams.tensors.
Gradients = dict


def _uniform_init(rng: RngStream, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.gen.uniform(-bound, bound, size=shape)


def init_params(dims, config: ModelConfig, rng: RngStream) -> ModelParams:
    """Initialize all tensors U[-1/sqrt(fan_in), 1/sqrt(fan_in)], fixed draw order."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 1 or any(d < 1 for d in dims):
        raise ParameterError(f"modality dims must be positive, got {dims}")
    t = {}
    if config.fusion_mode == "early":
        for m, d in enumerate(dims):
            t[f"cross{m}_w"] = _uniform_init(rng, d, (d, config.cross_dim))
    for m, d in enumerate(dims):
        d_in = d + (config.cross_dim if config.fusion_mode == "early" else 0)
        t[f"enc{m}_w1"] = _uniform_init(rng, d_in, (d_in, config.hidden))
        t[f"enc{m}_b1"] = _uniform_init(rng, d_in, (config.hidden,))
        t[f"enc{m}_w2"] = _uniform_init(rng, config.hidden, (config.hidden, config.embed))
        t[f"enc{m}_b2"] = _uniform_init(rng, config.hidden, (config.embed,))
    fused_in = len(dims) * config.embed
    t["fusion_w1"] = _uniform_init(rng, fused_in, (fused_in, config.fusion_hidden))
    t["fusion_b1"] = _uniform_init(rng, fused_in, (config.fusion_hidden,))
    t["out_w"] = _uniform_init(rng, config.fusion_hidden, (config.fusion_hidden,))
    t["out_b"] = _uniform_init(rng, config.fusion_hidden, (1,))
    return ModelParams(dims, config, t)


def _check_inputs(params: ModelParams, xs) -> list:
    if len(xs) != params.n_modalities:
        raise ShapeMismatchError(
            f"model expects {params.n_modalities} modalities, got {len(xs)}"
        )
    arrs = [np.asarray(x, dtype=np.float64) for x in xs]
    for m, (x, d) in enumerate(zip(arrs, params.dims)):
        if x.ndim != 2 or x.shape[1] != d:
            raise ShapeMismatchError(
                f"modality {m} features must have shape (B, {d}), got {x.shape}"
            )
    return arrs


def _encode_forward(params: ModelParams, xs) -> dict:
    """Encoder forward pass; returns every intermediate needed for backward."""
    xs = _check_inputs(params, xs)
    t = params.tensors
    cache = {"xs": xs}
    if params.config.fusion_mode == "early":
        ctx = [x @ t[f"cross{m}_w"] for m, x in enumerate(xs)]
        ctx_sum = np.sum(ctx, axis=0)
        cache["ctx"] = ctx
        ins = [np.concatenate([x, ctx_sum - ctx[m]], axis=1) for m, x in enumerate(xs)]
    else:
        ins = xs
    cache["ins"] = ins
    z1 = [ins[m] @ t[f"enc{m}_w1"] + t[f"enc{m}_b1"] for m in range(len(xs))]
    a1 = [np.maximum(z, 0.0) for z in z1]
    hs = [a1[m] @ t[f"enc{m}_w2"] + t[f"enc{m}_b2"] for m in range(len(xs))]
    cache["z1"], cache["a1"], cache["hs"] = z1, a1, hs
    return cache


def encode(params: ModelParams, xs) -> list:
    """Per-modality embeddings H_m of shape (B, embed)."""
    return _encode_forward(params, xs)["hs"]


def _fusion_forward(params: ModelParams, hiddens) -> dict:
    t = params.tensors
    fused = np.concatenate(hiddens, axis=1)
    zf = fused @ t["fusion_w1"] + t["fusion_b1"]
    af = np.maximum(zf, 0.0)
    pred = af @ t["out_w"] + t["out_b"][0]
    return {"fused": fused, "zf": zf, "af": af, "pred": pred}


def fuse_predict(params: ModelParams, hiddens) -> np.ndarray:
    """Fusion head predictions for precomputed (possibly mixed) embeddings."""
    if len(hiddens) != params.n_modalities:
        raise ShapeMismatchError(
            f"model expects {params.n_modalities} modalities, got {len(hiddens)}"
        )
    return _fusion_forward(params, [np.asarray(h, dtype=np.float64) for h in hiddens])["pred"]


def predict(params: ModelParams, xs) -> np.ndarray:
    """End-to-end predictions; mixing never runs here."""
    return fuse_predict(params, encode(params, xs))


def mse_loss(pred, targets) -> float:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ShapeMismatchError(f"pred shape {p.shape} vs targets shape {t.shape}")
    if p.size == 0:
        raise ParameterError("mse_loss needs at least one element")
    return float(np.mean((p - t) ** 2))


def backward(params: ModelParams, xs, targets, mix_matrices=None):
    """Loss and exact gradients for one (optionally mixed) training step.

    With mix_matrices given, modality m's fusion input is
    mix_matrices[m] @ H_m and `targets` must be the matching mixed labels;
    with None the encoder outputs feed the fusion head directly.
    Returns (loss, Gradients).
    """
    enc = _encode_forward(params, xs)
    hs = enc["hs"]
    n_mod = params.n_modalities
    if mix_matrices is not None:
        if len(mix_matrices) != n_mod:
            raise ShapeMismatchError(
                f"{len(mix_matrices)} mix matrices for {n_mod} modalities"
            )
        mix = [np.asarray(m, dtype=np.float64) for m in mix_matrices]
        fused_in = [mix[m] @ hs[m] for m in range(n_mod)]
    else:
        mix = None
        fused_in = hs
    fus = _fusion_forward(params, fused_in)
    targets = np.asarray(targets, dtype=np.float64)
    pred = fus["pred"]
    if targets.shape != pred.shape:
        raise ShapeMismatchError(f"targets shape {targets.shape} vs pred shape {pred.shape}")
    n = pred.shape[0]
    loss = float(np.mean((pred - targets) ** 2))

    t = params.tensors
    g: Gradients = {}
    dpred = 2.0 * (pred - targets) / n
    g["out_w"] = fus["af"].T @ dpred
    g["out_b"] = np.array([dpred.sum()])
    daf = np.outer(dpred, t["out_w"])
    dzf = daf * (fus["zf"] > 0.0)
    g["fusion_w1"] = fus["fused"].T @ dzf
    g["fusion_b1"] = dzf.sum(axis=0)
    dfused = dzf @ t["fusion_w1"].T

    embed = params.config.embed
    d_mixed = [dfused[:, m * embed:(m + 1) * embed] for m in range(n_mod)]
    # Gradient through mixing: transpose of the row-stochastic mix matrix.
    dhs = [mix[m].T @ d_mixed[m] for m in range(n_mod)] if mix is not None else d_mixed

    early = params.config.fusion_mode == "early"
    d_other = []
    for m in range(n_mod):
        da1 = dhs[m] @ t[f"enc{m}_w2"].T
        g[f"enc{m}_w2"] = enc["a1"][m].T @ dhs[m]
        g[f"enc{m}_b2"] = dhs[m].sum(axis=0)
        dz1 = da1 * (enc["z1"][m] > 0.0)
        g[f"enc{m}_w1"] = enc["ins"][m].T @ dz1
        g[f"enc{m}_b1"] = dz1.sum(axis=0)
        if early:
            d_in = dz1 @ t[f"enc{m}_w1"].T
            d_other.append(d_in[:, params.dims[m]:])
    if early:
        d_other_sum = np.sum(d_other, axis=0)
        for m in range(n_mod):
            dctx = d_other_sum - d_other[m]  # ctx_m feeds every encoder except its own
            g[f"cross{m}_w"] = enc["xs"][m].T @ dctx
    return loss, g


def save_checkpoint(params: ModelParams, path) -> None:
    """Write tensors plus a JSON shape manifest; round-trips bit-exactly."""
    meta = {
        "dims": list(params.dims),
        "hidden": params.config.hidden,
        "embed": params.config.embed,
        "fusion_hidden": params.config.fusion_hidden,
        "fusion_mode": params.config.fusion_mode,
        "cross_dim": params.config.cross_dim,
        "shapes": {k: list(v.shape) for k, v in params.tensors.items()},
    }
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8),
             **params.tensors)


def load_checkpoint(path) -> ModelParams:
    with np.load(path) as data:
        if "__meta__" not in data:
            raise DataFormatError(f"{path}: missing checkpoint manifest")
        try:
            meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"{path}: unreadable checkpoint manifest: {exc}") from None
        config = ModelConfig(
            hidden=meta["hidden"], embed=meta["embed"], fusion_hidden=meta["fusion_hidden"],
            fusion_mode=meta["fusion_mode"], cross_dim=meta["cross_dim"],
        )
        tensors = {}
        for name, shape in meta["shapes"].items():
            if name not in data:
                raise DataFormatError(f"{path}: manifest names missing tensor {name!r}")
            arr = np.asarray(data[name], dtype=np.float64)
            if list(arr.shape) != shape:
                raise DataFormatError(
                    f"{path}: tensor {name!r} shape {arr.shape} != manifest {tuple(shape)}"
                )
            tensors[name] = arr
    return ModelParams(tuple(meta["dims"]), config, tensors)
