"""Dense float64 linear algebra helpers and distribution samplers.

Matrices and vectors are plain numpy float64 ndarrays. The samplers are
hand-rolled on top of RngStream uniform/normal draws: Gamma via the
Marsaglia-Tsang squeeze method (with the u**(1/k) boost below shape 1),
Beta as a ratio of two Gammas, symmetric Dirichlet as normalized Gammas.
Keeping the transforms in one place pins the draw-consumption order, which
the mixing oracles rely on.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ParameterError, ShapeMismatchError
from .rng import RngStream


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting anything else."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatchError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with shape validation and a finiteness guard.

    Accepts (p,q)@(q,r) -> (p,r) and (p,q)@(q,) -> (p,).
    """
    left = as_matrix(a, "left operand")
    right = np.asarray(b, dtype=np.float64)
    if right.ndim not in (1, 2):
        raise ShapeMismatchError(f"right operand must be 1-D or 2-D, got shape {right.shape}")
    if left.shape[1] != right.shape[0]:
        raise ShapeMismatchError(
            f"inner dimensions differ: left {left.shape} vs right {right.shape}"
        )
    out = left @ right
    if not np.all(np.isfinite(out)):
        raise NumericError("matmul produced non-finite entries")
    return out


def sample_uniform(lo: float, hi: float, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. draws from U(lo, hi); requires lo < hi."""
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ParameterError(f"uniform bounds must be finite, got [{lo}, {hi}]")
    if not lo < hi:
        raise ParameterError(f"uniform bounds must satisfy lo < hi, got [{lo}, {hi}]")
    if n < 0:
        raise ParameterError(f"sample count must be nonnegative, got {n}")
    return lo + (hi - lo) * rng.gen.random(int(n))


def _gamma_raw(shape_k: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Marsaglia-Tsang Gamma(k, 1) draws for a flat array of shapes k > 0.

    Shapes below 1 sample Gamma(k+1) and apply the u**(1/k) boost afterwards,
    so the rejection pass always runs with k_eff >= 1. Each rejection round
    consumes one normal and one uniform per still-pending lane; the boost
    uniforms are drawn in a single block after the pass, which keeps the
    consumption order a pure function of the accept/reject history.
    """
    k = shape_k
    boost = k < 1.0
    d = np.where(boost, k + 1.0, k) - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(k.shape, dtype=np.float64)
    pending = np.arange(k.size)
    while pending.size:
        x = gen.standard_normal(pending.size)
        u = gen.random(pending.size)
        dp = d[pending]
        v = (1.0 + c[pending] * x) ** 3
        ok = v > 0.0
        accept = ok & (u < 1.0 - 0.0331 * x**4)
        rest = ok & ~accept
        if np.any(rest):
            with np.errstate(divide="ignore", invalid="ignore"):
                logu = np.log(u, where=rest, out=np.zeros_like(u))
                logv = np.log(v, where=rest, out=np.zeros_like(v))
            accept |= rest & (logu < 0.5 * x * x + dp * (1.0 - v + logv))
        out[pending[accept]] = dp[accept] * v[accept]
        pending = pending[~accept]
    if np.any(boost):
        u = gen.random(int(boost.sum()))
        out[boost] *= u ** (1.0 / k[boost])
    return out


def sample_gamma(shape_k, rng: RngStream, size: int | tuple | None = None):
    """Gamma(shape_k, 1) sample(s).

    Scalar by default; pass `size` for a vectorized batch. `shape_k` may be
    an array (broadcast against `size`) so heterogeneous-shape batches draw
    through one kernel invocation.
    """
    k = np.asarray(shape_k, dtype=np.float64)
    if not np.all(np.isfinite(k)) or np.any(k <= 0.0):
        raise ParameterError(f"gamma shape must be finite and > 0, got {shape_k!r}")
    if size is None and k.ndim == 0:
        return float(_gamma_raw(k.reshape(1), rng.gen)[0])
    shape = k.shape if size is None else ((size,) if np.ndim(size) == 0 else tuple(size))
    kb = np.ascontiguousarray(np.broadcast_to(k, shape), dtype=np.float64)
    return _gamma_raw(kb.ravel(), rng.gen).reshape(shape)


def sample_beta(a: float, b: float, rng: RngStream, size: int | None = None):
    """Beta(a, b) sample(s) as x/(x+y) with x~Gamma(a), y~Gamma(b)."""
    if not (np.isfinite(a) and np.isfinite(b)) or a <= 0.0 or b <= 0.0:
        raise ParameterError(f"beta parameters must be finite and > 0, got ({a}, {b})")
    n = 1 if size is None else int(size)
    x = sample_gamma(a, rng, size=n)
    y = sample_gamma(b, rng, size=n)
    s = x + y
    # Both gammas underflowing to 0 is astronomically rare; fall back to 1/2.
    vals = np.where(s > 0.0, x / np.where(s > 0.0, s, 1.0), 0.5)
    return float(vals[0]) if size is None else vals


def sample_dirichlet_symmetric(alpha: float, dim: int, rng: RngStream) -> np.ndarray:
    """One draw from Dirichlet(alpha * 1_dim)."""
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise ParameterError(f"dirichlet concentration must be finite and > 0, got {alpha}")
    if dim < 1:
        raise ParameterError(f"dirichlet dimension must be >= 1, got {dim}")
    g = sample_gamma(np.full(int(dim), float(alpha)), rng)
    s = g.sum()
    if s <= 0.0:
        return np.full(int(dim), 1.0 / dim)
    return g / s


def sample_dirichlet_rows(alphas, dim: int, rng: RngStream) -> np.ndarray:
    """Row i ~ Dirichlet(alphas[i] * 1_dim); returns an (n, dim) matrix."""
    av = as_vector(alphas, "alphas")
    if not np.all(np.isfinite(av)) or np.any(av <= 0.0):
        raise ParameterError("dirichlet concentrations must be finite and > 0")
    if dim < 1:
        raise ParameterError(f"dirichlet dimension must be >= 1, got {dim}")
    g = sample_gamma(np.broadcast_to(av[:, None], (av.size, int(dim))), rng)
    s = g.sum(axis=1)
    bad = s <= 0.0
    if np.any(bad):
        g[bad] = 1.0
        s = g.sum(axis=1)
    return g / s[:, None]


def sample_bernoulli_matrix(prob, rng: RngStream) -> np.ndarray:
    """Binary float64 matrix with independent entries M_ij ~ Bern(prob_ij)."""
    p = as_matrix(prob, "prob")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ParameterError("bernoulli probabilities must lie in [0, 1]")
    return (rng.gen.random(p.shape) < p).astype(np.float64)
