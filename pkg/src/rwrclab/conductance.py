"""Conductances built on top of an environment, stored as log-weights.

Edges of a box are split into horizontal edges ``[x, x+e1]`` (array of
shape ``(H, W-1)``) and vertical edges ``[x, x+e2]`` (shape ``(H-1, W)``),
both indexed by the base point.  Working with ``log w`` keeps weights up to
``exp(1e6)`` representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._hash import TAG_EDGE_H, TAG_EDGE_V, as_seed, uniform4
from .errors import ConfigError, InsufficientDataError
from .intensity import Box
from .lattice import AncestralField, HeightField


@dataclass(frozen=True)
class ConductanceParams:
    """Tree conductances ``w = exp((h + 1) ** A)``; ``alpha_bar`` is the
    moment exponent used in diagnostics."""

    A: float = 1.25
    alpha_bar: float | None = 0.7

    def __post_init__(self):
        if not (self.A > 1 and math.isfinite(self.A)):
            raise ConfigError(f"requires A > 1, got A={self.A!r}")
        if self.alpha_bar is not None:
            if not self.alpha_bar > 0:
                raise ConfigError(f"alpha_bar must be positive, got {self.alpha_bar!r}")
            if not self.A * self.alpha_bar < 1:
                raise ConfigError(f"requires A * alpha_bar < 1, got A={self.A}, alpha_bar={self.alpha_bar}")


@dataclass(frozen=True)
class IidLogParams:
    """I.i.d. control field: ``log w = u ** (-1 / beta)``, ``u`` uniform."""

    beta: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not (self.beta > 1 and math.isfinite(self.beta)):
            raise ConfigError(f"requires beta > 1, got beta={self.beta!r}")


@dataclass(frozen=True)
class ConductanceField:
    box: Box
    logw_h: np.ndarray
    logw_v: np.ndarray

    def logw(self, x, axis: int) -> float:
        r, c = self.box.index(x)
        return float(self.logw_h[r, c] if axis == 1 else self.logw_v[r, c])

    def edge_values(self) -> np.ndarray:
        return np.concatenate([self.logw_h.ravel(), self.logw_v.ravel()])


def tree_log_weight(h, A: float):
    return (np.asarray(h, dtype=float) + 1.0) ** A


def conductances_from_heights(hf: HeightField, anc: AncestralField, cp: ConductanceParams) -> ConductanceField:
    """``log w({z, a(z)}) = (h(z) + 1) ** A`` on tree edges inside the box,
    ``0`` on every other in-box edge."""
    d = anc.direction
    lw = tree_log_weight(hf.h, cp.A)
    logw_h = np.where(d[:, :-1] == 1, lw[:, :-1], 0.0)
    logw_v = np.where(d[:-1, :] == 2, lw[:-1, :], 0.0)
    return ConductanceField(hf.box, logw_h, logw_v)


@njit(cache=True, inline="always")
def iid_logw(seed, inv_beta, x1, x2, axis):
    tag = TAG_EDGE_H if axis == 1 else TAG_EDGE_V
    return uniform4(seed, tag, x1, x2) ** (-inv_beta)


@njit(cache=True)
def _iid_arrays(seed, inv_beta, ox, oy, w, h):
    lh = np.empty((h, w - 1))
    lv = np.empty((h - 1, w))
    for r in range(h):
        for c in range(w - 1):
            lh[r, c] = iid_logw(seed, inv_beta, ox + c, oy + r, 1)
    for r in range(h - 1):
        for c in range(w):
            lv[r, c] = iid_logw(seed, inv_beta, ox + c, oy + r, 2)
    return lh, lv


@dataclass(frozen=True)
class IidLogField:
    """The i.i.d. field realized lazily on the whole lattice."""

    params: IidLogParams

    def logw(self, x, axis: int) -> float:
        p = self.params
        return float(iid_logw(as_seed(p.seed), 1.0 / p.beta, int(x[0]), int(x[1]), int(axis)))

    def restrict(self, box: Box) -> ConductanceField:
        return iid_log_pareto(box, self.params)


def iid_log_pareto(box: Box, p: IidLogParams) -> ConductanceField:
    """I.i.d. log-weights keyed by the canonical edge (base point, axis);
    ``E[log w ** a]`` is finite exactly for ``a < beta``."""
    ox, oy = box.origin
    lh, lv = _iid_arrays(as_seed(p.seed), 1.0 / p.beta, ox, oy, box.width, box.height)
    return ConductanceField(box, lh, lv)


def empirical_log_moment(samples, alpha: float) -> float:
    """Mean of ``log w ** alpha`` (with ``0 ** alpha = 0``)."""
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise InsufficientDataError("no samples")
    if (s < 0).any():
        raise ConfigError("log-weights must be nonnegative")
    return float(np.mean(s**alpha))


def log_moment_from_height_tail(tail, A: float, alpha: float) -> tuple[float, int]:
    """Truncated series for ``E[log w ** alpha]`` from a height tail.

    ``tail[k]`` is ``P(h > k - 1)`` for ``k = 0..K`` (so ``tail[0] = 1``).
    Returns ``sum_k tail[k] * ((k+1)**(alpha A) - k**(alpha A))`` and ``K``.
    """
    tail = np.asarray(tail, dtype=float)
    if tail.ndim != 1 or tail.size == 0:
        raise InsufficientDataError("empty tail")
    k = np.arange(tail.size, dtype=float)
    g = alpha * A
    return float(np.sum(tail * ((k + 1.0) ** g - k**g))), int(tail.size - 1)


def height_survival(h, K: int) -> np.ndarray:
    """``[P(h > k - 1) for k in 0..K]`` from height samples."""
    h = np.asarray(h).ravel()
    if h.size == 0:
        raise InsufficientDataError("no height samples")
    counts = np.bincount(np.minimum(h, K + 1).astype(np.int64), minlength=K + 2)
    return survival_from_counts(counts)


def survival_from_counts(counts) -> np.ndarray:
    """``height_survival`` from a histogram of ``min(h, K + 1)`` (length ``K + 2``)."""
    counts = np.asarray(counts)
    if counts.sum() == 0:
        raise InsufficientDataError("no height samples")
    ge = np.cumsum(counts[::-1])[::-1]  # ge[k] = #{h >= k}
    return ge[:-1] / counts.sum()


def tree_edge_log_weights(hf: HeightField, cp: ConductanceParams, mask=None) -> np.ndarray:
    """``log w`` of the tree edges leaving the chosen sites (all by default)."""
    h = hf.h if mask is None else hf.h[mask]
    return tree_log_weight(h.ravel(), cp.A)


def marginal_log_moments(hf: HeightField, anc: AncestralField, cp: ConductanceParams, alphas,
                         mask=None) -> dict:
    """``E[log w ** alpha]`` under two edge-sampling schemes.

    ``tree_edge`` samples the parent edge of a site, ``uniform_edge`` a
    uniform in-box edge (non-tree edges count with ``log w = 0``).  Only
    edges based at sites in ``mask`` (default ``hf.exact``) are used.
    """
    mask = hf.exact if mask is None else np.asarray(mask, dtype=bool)
    cf = conductances_from_heights(hf, anc, cp)
    tree = tree_edge_log_weights(hf, cp, mask)
    uni = np.concatenate([cf.logw_h[mask[:, :-1]], cf.logw_v[mask[:-1, :]]])
    return {
        "tree_edge": {float(a): empirical_log_moment(tree, a) for a in alphas},
        "uniform_edge": {float(a): empirical_log_moment(uni, a) for a in alphas},
        "samples": {"tree_edge": int(tree.size), "uniform_edge": int(uni.size)},
    }
