"""Box-mode construction of the umbrella forest.

Pipeline: intensities -> ``paint_lambda`` -> ``ancestral_from_lambda`` ->
``heights_from_ancestral``.  All arrays over the inner box are indexed
``[x2 - oy, x1 - ox]``.

Painting convention: an umbrella deflects the drop at every covered edge
except the ones based at its own anchor.  Without this rule every site
would see its own umbrella on both sides and ``lambda_1 = lambda_2`` would
tie everywhere.  The forced neighbours survive: ``lambda_2(x) >= L(x - e1)``
and ``lambda_1(x) >= L(x - e2)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvariantError, ShapeError
from .intensity import Box, IntensityParams, intensity_at, kernel_args
from .umbrella import column_height, stair_edge_count, stair_slope

TIE_TOLERANCE = 1e-4  # fraction of tied sites that still counts as sound


@dataclass(frozen=True)
class LambdaField:
    box: Box
    lam1: np.ndarray
    lam2: np.ndarray


@dataclass(frozen=True)
class AncestralField:
    """``direction`` is 1 where ``a(x) = x + e1`` and 2 where ``a(x) = x + e2``."""

    box: Box
    direction: np.ndarray
    tiebreak_count: int = 0


@dataclass(frozen=True)
class HeightField:
    box: Box
    h: np.ndarray
    exact: np.ndarray

    @property
    def depth(self) -> np.ndarray:
        return self.box.depth()


@njit(cache=True, inline="always")
def _put(arr, r, c, v):
    if v > arr[r, c]:
        arr[r, c] = v


@njit(cache=True)
def _paint_straight(lam1, lam2, y1, y2, t, ox, oy, w, h):
    n = int(math.floor(t))
    c = y1 - ox
    if 0 <= c < w:  # vertical side -> lambda_1
        k0 = max(1, oy - y2)
        k1 = min(n, oy + h - 1 - y2)
        for k in range(k0, k1 + 1):
            _put(lam1, y2 + k - oy, c, t)
    r = y2 - oy
    if 0 <= r < h:  # horizontal side -> lambda_2
        k0 = max(1, ox - y1)
        k1 = min(n, ox + w - 1 - y1)
        for k in range(k0, k1 + 1):
            _put(lam2, r, y1 + k - ox, t)


@njit(cache=True)
def _paint_diagonal(lam1, lam2, y1, y2, t, ox, oy, w, h):
    slope = stair_slope(t)
    ne = stair_edge_count(t)
    a = 0
    b = 0
    for m in range(ne):
        horizontal = b == column_height(a, slope)
        if m >= 1:
            # side 2 at (y1+a, y2+b); side 1 mirrored at (y1+b, y2+a)
            c2 = y1 + a - ox
            r2 = y2 + b - oy
            c1 = y1 + b - ox
            r1 = y2 + a - oy
            if (c2 >= w or r2 >= h) and (c1 >= w or r1 >= h):
                break
            if 0 <= c2 < w and 0 <= r2 < h:
                if horizontal:
                    _put(lam2, r2, c2, t)
                else:
                    _put(lam1, r2, c2, t)
            if 0 <= c1 < w and 0 <= r1 < h:
                if horizontal:
                    _put(lam1, r1, c1, t)
                else:
                    _put(lam2, r1, c1, t)
        if horizontal:
            a += 1
        else:
            b += 1


@njit(cache=True, nogil=True)
def _paint_box(seed, model, theta, n0, p0, ox, oy, w, h, margin):
    lam1 = np.zeros((h, w))
    lam2 = np.zeros((h, w))
    # anchors right of or above the inner box cannot reach it
    for y2 in range(oy - margin, oy + h):
        for y1 in range(ox - margin, ox + w):
            t = intensity_at(seed, model, theta, n0, p0, y1, y2)
            if model == 0:
                _paint_straight(lam1, lam2, y1, y2, t, ox, oy, w, h)
            else:
                _paint_diagonal(lam1, lam2, y1, y2, t, ox, oy, w, h)
    return lam1, lam2


@njit(cache=True, nogil=True)
def _paint_values(values, model, ox, oy, w, h, margin):
    lam1 = np.zeros((h, w))
    lam2 = np.zeros((h, w))
    for r in range(h + margin):
        for c in range(w + margin):
            t = values[r, c]
            y1 = ox - margin + c
            y2 = oy - margin + r
            if model == 0:
                _paint_straight(lam1, lam2, y1, y2, t, ox, oy, w, h)
            else:
                _paint_diagonal(lam1, lam2, y1, y2, t, ox, oy, w, h)
    return lam1, lam2


def paint_lambda(params: IntensityParams, box: Box, values: np.ndarray | None = None) -> LambdaField:
    """Max-reduce every umbrella of the generation region onto the inner box.

    ``values`` optionally supplies the intensities over the generation
    region (shape ``(height + 2 margin, width + 2 margin)``); by default they
    are realized from the seed.

    Raises
    ------
    InvariantError
        If any inner site is left uncovered (the margin is too small).
    """
    ox, oy = box.origin
    if values is None:
        lam1, lam2 = _paint_box(*kernel_args(params), ox, oy, box.width, box.height, box.margin)
    else:
        m = box.margin
        if values.shape != (box.height + 2 * m, box.width + 2 * m):
            raise ShapeError(f"values shape {values.shape} does not match the generation region")
        lam1, lam2 = _paint_values(
            np.ascontiguousarray(values, dtype=float), params.model.code, ox, oy, box.width, box.height, m
        )
    if (lam1 <= 0).any() or (lam2 <= 0).any():
        raise InvariantError("uncovered inner-box site; the generation margin must be >= 1")
    return LambdaField(box, lam1, lam2)


def ancestral_from_lambda(field: LambdaField) -> AncestralField:
    """``a(x) = x + e_i`` with ``i`` the side of the weaker umbrella.

    Exact ties go to ``e1``; their count is recorded and a warning is raised
    when they exceed ``TIE_TOLERANCE`` of the sites.
    """
    if field.lam1.shape != field.lam2.shape:
        raise ShapeError("lambda arrays differ in shape")
    ties = int(np.count_nonzero(field.lam1 == field.lam2))
    direction = np.where(field.lam2 < field.lam1, 2, 1).astype(np.uint8)
    if ties > TIE_TOLERANCE * direction.size:
        warnings.warn(f"{ties} tied sites exceed the soundness threshold", RuntimeWarning, stacklevel=2)
    return AncestralField(field.box, direction, ties)


@njit(cache=True, nogil=True)
def _heights(direction):
    nr, nc = direction.shape
    h = np.zeros((nr, nc), dtype=np.int64)
    for r in range(nr):
        for c in range(nc):
            best = 0
            if c > 0 and direction[r, c - 1] == 1:
                best = h[r, c - 1] + 1
            if r > 0 and direction[r - 1, c] == 2 and h[r - 1, c] + 1 > best:
                best = h[r - 1, c] + 1
            h[r, c] = best
    return h


def heights_from_ancestral(anc: AncestralField) -> HeightField:
    """Longest in-box descendant chain ending at each site.

    ``h(x) = max`` over in-box children ``y`` (``a(y) = x``) of ``h(y) + 1``;
    ``0`` for sites without children.  ``exact`` marks sites whose height
    cannot be affected by sites outside the box: ``h(x) < depth(x)``.
    """
    h = _heights(anc.direction)
    exact = h < anc.box.depth()
    return HeightField(anc.box, h, exact)


def build_forest(params: IntensityParams, box: Box):
    lam = paint_lambda(params, box)
    anc = ancestral_from_lambda(lam)
    return lam, anc, heights_from_ancestral(anc)


def tree_edge_set(anc: AncestralField) -> np.ndarray:
    """Edges ``{x, a(x)}`` for every inner site as rows ``(x1, x2, a1, a2)``."""
    ox, oy = anc.box.origin
    r, c = np.indices(anc.direction.shape)
    x1 = (c + ox).ravel()
    x2 = (r + oy).ravel()
    d = anc.direction.ravel()
    return np.stack([x1, x2, x1 + (d == 1), x2 + (d == 2)], axis=1).astype(np.int64)


@njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True)
def _count_cycles(direction):
    nr, nc = direction.shape
    # nodes: box sites, then the row above, then the column to the right
    n = nr * nc + nc + nr
    parent = np.arange(n)
    cycles = 0
    for r in range(nr):
        for c in range(nc):
            i = r * nc + c
            if direction[r, c] == 1:
                j = r * nc + c + 1 if c + 1 < nc else nr * nc + nc + r
            else:
                j = (r + 1) * nc + c if r + 1 < nr else nr * nc + c
            a = _find(parent, i)
            b = _find(parent, j)
            if a == b:
                cycles += 1
            else:
                parent[a] = b
    return cycles


def count_cycles(anc: AncestralField) -> int:
    """Number of tree edges that close a cycle (union-find); 0 for a forest."""
    return int(_count_cycles(anc.direction))


# ------------------------------------------------------------ row sweep

_STACK_CAP = 512


@njit(cache=True, nogil=True)
def _sweep_straight(seed, theta, n0, p0, ox, oy, w, h, margin, lo, hi, kk, keep):
    nreq = lo.size
    counts = np.zeros((nreq, kk.max() + 2 if nreq else 1), dtype=np.int64)
    h_out = np.zeros((h if keep else 0, w), dtype=np.int64)
    row = np.empty(w + margin)
    lam2 = np.empty(w)
    d_prev = np.zeros(w, dtype=np.uint8)
    d_cur = np.zeros(w, dtype=np.uint8)
    h_prev = np.zeros(w, dtype=np.int64)
    h_cur = np.zeros(w, dtype=np.int64)
    # per-column ring stacks of live vertical sides, values decreasing upward
    sval = np.empty((w, _STACK_CAP))
    stop = np.empty((w, _STACK_CAP), dtype=np.int64)
    base = np.zeros(w, dtype=np.int64)
    size = np.zeros(w, dtype=np.int64)
    ties = 0
    for y2 in range(oy - margin, oy + h):
        for j in range(w + margin):
            row[j] = intensity_at(seed, 0, theta, n0, p0, ox - margin + j, y2)
        r = y2 - oy
        if r >= 0:
            lam2[:] = 0.0
            for j in range(w + margin):
                t = row[j]
                k1 = min(j + int(math.floor(t)), w + margin - 1)
                for k in range(max(j + 1, margin), k1 + 1):
                    if t > lam2[k - margin]:
                        lam2[k - margin] = t
            for c in range(w):
                while size[c] > 0 and stop[c, base[c]] < y2:
                    base[c] = (base[c] + 1) % _STACK_CAP
                    size[c] -= 1
                if size[c] == 0 or lam2[c] <= 0:
                    return counts, h_out, ties, False
                l1 = sval[c, base[c]]
                if l1 == lam2[c]:
                    ties += 1
                d_cur[c] = 2 if lam2[c] < l1 else 1
                best = 0
                if c > 0 and d_cur[c - 1] == 1:
                    best = h_cur[c - 1] + 1
                if r > 0 and d_prev[c] == 2 and h_prev[c] + 1 > best:
                    best = h_prev[c] + 1
                h_cur[c] = best
                for q in range(nreq):
                    if lo[q] <= r < hi[q] and lo[q] <= c < hi[q]:
                        counts[q, min(best, kk[q] + 1)] += 1
            if keep:
                h_out[r, :] = h_cur
            h_prev, h_cur = h_cur, h_prev
            d_prev, d_cur = d_cur, d_prev
        # a newer anchor with a larger value also reaches higher
        for c in range(w):
            t = row[margin + c]
            while size[c] > 0 and sval[c, (base[c] + size[c] - 1) % _STACK_CAP] <= t:
                size[c] -= 1
            if size[c] == _STACK_CAP:
                raise RuntimeError("column stack overflow")
            i = (base[c] + size[c]) % _STACK_CAP
            sval[c, i] = t
            stop[c, i] = y2 + int(math.floor(t))
            size[c] += 1
    return counts, h_out, ties, True


def straight_height_counts(params: IntensityParams, box: Box, squares=(), keep: bool = False):
    """Box-mode STRAIGHT heights by a row sweep in ``O(width)`` memory.

    Produces the same forest as ``build_forest`` without holding the lambda
    arrays.  ``squares`` lists ``(lo, hi, K)``: for each, the histogram of
    ``min(h, K + 1)`` over inner sites with both box coordinates in
    ``[lo, hi)`` (length ``K + 2``).  With ``keep`` the full height array is
    returned as well (small boxes only).

    Returns ``(counts, heights_or_None, tiebreak_count)``.
    """
    if params.model.code != 0:
        raise ValueError("the row sweep covers the STRAIGHT model only")
    lo = np.array([s[0] for s in squares], dtype=np.int64)
    hi = np.array([s[1] for s in squares], dtype=np.int64)
    kk = np.array([s[2] for s in squares], dtype=np.int64)
    seed, _, theta, n0, p0 = kernel_args(params)
    ox, oy = box.origin
    counts, h_out, ties, ok = _sweep_straight(
        seed, theta, n0, p0, ox, oy, box.width, box.height, box.margin, lo, hi, kk, keep
    )
    if not ok:
        raise InvariantError("uncovered inner-box site; the generation margin must be >= 1")
    out = [counts[q, : kk[q] + 2].copy() for q in range(len(squares))]
    return out, (h_out if keep else None), int(ties)
