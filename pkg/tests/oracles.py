"""Slow reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np

from rwrclab.intensity import Box
from rwrclab.lattice import _paint_diagonal, _paint_straight
from rwrclab.umbrella import stair_edge_count, stair_slope


def _stair_cover(a, b, t):
    """Is ``(a, b)`` the base of a painted staircase edge of intensity ``t``?
    Returns 0 (no), 1 (horizontal edge) or 2 (vertical edge).  Closed form:
    column ``a`` of the path holds heights ``h_{a-1} .. h_a``."""
    if a < 0 or b < 0:
        return 0
    m = a + b
    if m < 1 or m > stair_edge_count(t) - 1:
        return 0
    slope = stair_slope(t)
    ha = math.floor(a * slope)
    hprev = math.floor((a - 1) * slope) if a >= 1 else 0
    if a == 0 or not (hprev <= b <= ha):
        return 0
    return 1 if b == ha else 2


def _stair_cover_vec(a, b, t, slope, last):
    """Vectorized ``_stair_cover`` over anchors."""
    m = a + b
    ok = (a >= 1) & (b >= 0) & (m >= 1) & (m <= last)
    ha = np.floor(a * slope)
    hprev = np.floor(np.maximum(a - 1, 0) * slope)
    ok &= (hprev <= b) & (b <= ha)
    return np.where(ok, np.where(b == ha, 1, 2), 0)


def naive_lambda(values: np.ndarray, box: Box, model_code: int):
    """``lambda_1, lambda_2`` by testing every (site, anchor) pair."""
    ox, oy = box.origin
    m = box.margin
    H, W = box.height, box.width
    lam1 = np.zeros((H, W))
    lam2 = np.zeros((H, W))
    rr, cc = np.indices(values.shape)
    y1 = (ox - m + cc).ravel()
    y2 = (oy - m + rr).ravel()
    t = values.ravel().astype(float)
    if model_code != 0:
        slope = np.array([stair_slope(v) for v in t])
        last = np.array([stair_edge_count(v) - 1 for v in t])
    for r in range(H):
        for c in range(W):
            a, b = ox + c - y1, oy + r - y2
            if model_code == 0:
                n = np.floor(t)
                c1 = (a == 0) & (b >= 1) & (b <= n)
                c2 = (b == 0) & (a >= 1) & (a <= n)
            else:
                k = _stair_cover_vec(a, b, t, slope, last)  # lower side
                j = _stair_cover_vec(b, a, t, slope, last)  # mirrored side swaps axes
                c1 = (k == 2) | (j == 1)
                c2 = (k == 1) | (j == 2)
            lam1[r, c] = t[c1].max(initial=0.0)
            lam2[r, c] = t[c2].max(initial=0.0)
    return lam1, lam2


def chain_heights(direction: np.ndarray) -> np.ndarray:
    """Heights by explicitly following every chain ``y, a(y), a(a(y)), ...``
    inside the box and recording how many steps it took to reach each site."""
    H, W = direction.shape
    h = np.zeros((H, W), dtype=np.int64)
    for r0 in range(H):
        for c0 in range(W):
            r, c, k = r0, c0, 0
            while True:
                if direction[r, c] == 1:
                    c += 1
                else:
                    r += 1
                k += 1
                if r >= H or c >= W:
                    break
                if k > h[r, c]:
                    h[r, c] = k
    return h


def paint_anchor_list(model_code: int, anchors, box: Box):
    """Paint an explicit list of ``(y1, y2, t)`` anchors onto ``box``.

    Far anchors are painted index by index over the anti-diagonals that
    meet the box, using the closed-form staircase position."""
    from rwrclab.umbrella import stair_point

    ox, oy = box.origin
    lam1 = np.zeros(box.shape)
    lam2 = np.zeros(box.shape)
    smin = ox + oy
    smax = ox + box.width - 1 + oy + box.height - 1
    paint = _paint_straight if model_code == 0 else _paint_diagonal
    for y1, y2, t in anchors:
        y1, y2, t = int(y1), int(y2), float(t)
        if y1 >= ox + box.width or y2 >= oy + box.height:
            continue
        if model_code == 0 or smin - (y1 + y2) < 256:
            paint(lam1, lam2, y1, y2, t, ox, oy, box.width, box.height)
            continue
        slope = stair_slope(t)
        last = stair_edge_count(t) - 1
        for m in range(max(1, smin - (y1 + y2)), min(last, smax - (y1 + y2)) + 1):
            a, b, hor = stair_point(m, slope)
            for p1, p2, vert in ((y1 + a, y2 + b, not hor), (y1 + b, y2 + a, hor)):
                c, r = p1 - ox, p2 - oy
                if 0 <= c < box.width and 0 <= r < box.height:
                    arr = lam1 if vert else lam2
                    arr[r, c] = max(arr[r, c], t)
    return lam1, lam2


def stream_band_oracle(env, s0: int, lo: np.ndarray):
    """Lambda on the rows of a band sweep, from first principles: every base
    anchor near the band plus every mark of every block within reach."""
    from rwrclab.stream import base_intensity, block_points, new_state

    st = new_state(env)
    K0 = env.settings.near_reach
    Wb = env.settings.band_width
    seed = st.seed[0]
    model = int(st.icfg[0])
    theta, n0, p0, sk0 = (float(v) for v in st.fcfg[:4])
    n = lo.size
    x1min, x1max = int(lo.min()), int(lo.max()) + Wb - 1
    x2min = s0 - x1max
    x2max = s0 + n - 1 - x1min
    px = np.zeros(8192, dtype=np.int64)
    py = np.zeros(8192, dtype=np.int64)
    pv = np.zeros(8192)
    pok = np.zeros(8192, dtype=bool)
    marks: dict[tuple[int, int], float] = {}
    for lvl in range(st.lev_q.size):
        B = int(st.lev_B[lvl])
        reach = int(st.lev_reach[lvl])
        for bx in range((x1min - reach) // B, x1max // B + 1):
            for by in range((x2min - reach) // B, x2max // B + 1):
                k = block_points(seed, lvl, bx, by, B, st.lev_q[lvl], st.lev_muhi[lvl], model,
                                 theta, n0, p0, px, py, pv, pok)
                for j in range(k):
                    if pok[j]:
                        key = (int(px[j]), int(py[j]))
                        marks[key] = max(marks.get(key, 0.0), float(pv[j]))
    anchors = [(y1, y2, t) for (y1, y2), t in marks.items()]
    for y2 in range(x2min - K0 - 2, x2max + 1):
        for y1 in range(x1min - K0 - 2, x1max + 1):
            if (y1, y2) not in marks:
                anchors.append((y1, y2, base_intensity(seed, model, theta, n0, p0, sk0, st.itab, y1, y2)))
    box = Box((x1min, x2min), x1max - x1min + 1, x2max - x2min + 1, 0)
    lam1, lam2 = paint_anchor_list(model, anchors, box)
    out1 = np.zeros((n, Wb))
    out2 = np.zeros((n, Wb))
    for k in range(n):
        for j in range(Wb):
            x1 = int(lo[k]) + j
            x2 = s0 + k - x1
            out1[k, j] = lam1[x2 - x2min, x1 - x1min]
            out2[k, j] = lam2[x2 - x2min, x1 - x1min]
    return out1, out2
