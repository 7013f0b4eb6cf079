"""Streaming tree environment for long walks.

A ballistic walk of 10^7 steps leaves any box that fits in memory, so the
tree is generated on the fly in a band of ``band_width`` sites that follows
the walker.  Sites are swept one anti-diagonal ``s = x1 + x2`` at a time;
on every anti-diagonal the band covers ``x1 in [lo_s, lo_s + band_width)``
and ``lo_s`` advances by 0 or 1 to keep the walker centred.

Intensity field
    The law is split at ``K0 = near_reach``.  Each site carries a base
    intensity drawn from the law conditioned on ``L <= K0`` (hashed per
    site), and on top of that a Poisson field of marks with per-site
    intensity ``mu(t) = -log(1 - S(t))`` for values above ``t >= K0``.
    ``L(x)`` is the largest mark at ``x`` if there is one, otherwise the base
    value.  Then ``P(L(x) > t) = S(t)`` exactly and sites are independent.
    Marks are generated per block: level ``l`` holds values in
    ``(K0 2^l, K0 2^(l+1)]`` on a grid of blocks of side ``K0 2^l``.

Painting
    Base umbrellas are pushed into a small ring of future anti-diagonals as
    soon as their anchor is swept.  Mark umbrellas are kept in a heap keyed
    by the next anti-diagonal on which one of their sides can touch the
    band; each side moves at most one site per anti-diagonal relative to the
    band, so the distance is a safe delay.

Inside the band ``lambda`` and ``a`` are exact.  Heights only see the part
of the tree inside the swept band, so they are lower bounds; they are
exact along the walker's own branch once it has followed the tree inside
the band.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._hash import TAG_BLOCK, TAG_INTENSITY, TAG_POINT, TAG_WALK, as_seed, hash4, to_unit, uniform4
from .conductance import ConductanceParams
from .errors import ConfigError, InvariantError
from .intensity import IntensityParams, Model, inverse_survival, kernel_args
from .umbrella import stair_edge_count, stair_point, stair_slope
from .walker import Trajectory, WalkConfig, checkpoint_schedule, choose_move, tail_fraction

# integer registers in StreamState.ist
_HEAP, _FREE, _FRONT, _S0, _NSUP, _TUSED, _TLIVE, _TIES, _MADE, _LASTPASS, _PEAK, _UNCOV, _ANOM, _NREG, _POPS, _NACT = range(16)
# integer parameters in StreamState.icfg
_MODEL, _K0, _WB, _RH, _RN, _P, _NL, _PASS, _LEAD = range(9)
# float parameters in StreamState.fcfg
_THETA, _N0, _P0, _SK0 = range(4)

_EMPTY, _USED, _TOMB = 0, 1, 2

StreamState = namedtuple(
    "StreamState",
    "ist icfg fcfg seed lev_q lev_muhi lev_B lev_reach lev_box "
    "near1 near2 hdir hh hlam1 hlam2 hlo "
    "a_y1 a_y2 a_L a_slope a_maxm free hkey hidx "
    "t_state t_k1 t_k2 t_val sup px py pv pok act rel itab",
)


@dataclass(frozen=True)
class StreamSettings:
    band_width: int = 64
    history: int = 4096
    near_reach: int = 32
    backfill: int = 256
    top_level: float = 2.0**40
    anchor_capacity: int = 1 << 18
    pass_every: int = 8

    def __post_init__(self):
        k = self.near_reach
        if k < 2 or k & (k - 1):
            raise ConfigError(f"near_reach must be a power of two >= 2, got {k}")
        if self.band_width < 8:
            raise ConfigError(f"band_width must be >= 8, got {self.band_width}")
        h = self.history
        if h & (h - 1) or h < 2 * self.backfill or h < 64:
            raise ConfigError("history must be a power of two, >= 64 and >= 2 * backfill")


@dataclass(frozen=True)
class StreamingTreeEnvironment:
    """Tree environment realized around the walker (see module docstring)."""

    intensity: IntensityParams
    conductance: ConductanceParams = ConductanceParams()
    settings: StreamSettings = StreamSettings()

    def __post_init__(self):
        if self.settings.near_reach < self.intensity.n0:
            raise ConfigError("near_reach must be >= n0")


def _pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def layer_table(params: IntensityParams, near_reach: int, top_level: float):
    """Per-level thresholds, Poisson intensities and block sizes."""
    surv = params.survival
    T = [float(near_reach)]
    while T[-1] < top_level:
        T.append(2.0 * T[-1])
    nl = len(T)
    mu = [-math.log1p(-surv(t)) for t in T]
    q, muhi = [], []
    for lvl in range(nl):
        hi = mu[lvl + 1] if lvl + 1 < nl else 0.0
        q.append(mu[lvl] - hi)
        muhi.append(hi)
    B = [int(t) for t in T]
    reach = [int(2 * t) + 4 for t in T]
    return np.array(q), np.array(muhi), np.array(B, dtype=np.int64), np.array(reach, dtype=np.int64)


def base_inverse_table(params: IntensityParams, sk0: float, n: int = 4096) -> np.ndarray:
    """Start values for the diagonal tail inverse on ``u in [sk0, p0]``:
    ``[v_lo, 1/dv, ln theta, w_0 .. w_{n-1}]`` with ``w = ln S^{-1}(e^-v)``
    on a uniform grid in ``v = -ln u``.  Unused for the straight law."""
    if params.model is not Model.DIAGONAL:
        return np.zeros(3 + n)
    vlo = -math.log(params.p0)
    vhi = -math.log(sk0)
    v = np.linspace(vlo, vhi, n)
    w = np.array([math.log(inverse_survival(math.exp(-x), 1, params.theta, float(params.n0), params.p0))
                  for x in v])
    return np.concatenate([[vlo, (n - 1) / (vhi - vlo), math.log(params.theta)], w])


def new_state(env: StreamingTreeEnvironment) -> StreamState:
    p, st = env.intensity, env.settings
    q, muhi, B, reach = layer_table(p, st.near_reach, st.top_level)
    nl = len(q)
    K0 = st.near_reach
    Wb = st.band_width
    RN = _pow2(K0 + 4)
    P = _pow2(Wb + 2 * K0 + 16)
    cap = st.anchor_capacity
    tcap = _pow2(2 * cap)
    icfg = np.array([p.model.code, K0, Wb, st.history, RN, P, nl, st.pass_every,
                     st.pass_every + K0 + 8], dtype=np.int64)
    fcfg = np.array([p.theta, float(p.n0), p.p0, float(p.survival(float(K0)))])
    ist = np.zeros(20, dtype=np.int64)
    ist[_FREE] = cap
    lev_box = np.zeros((nl, 4), dtype=np.int64)
    lev_box[:, 0] = 1  # empty rectangle: lo > hi
    return StreamState(
        ist, icfg, fcfg, np.array([p.useed], dtype=np.uint64), q, muhi, B, reach, lev_box,
        np.zeros((RN, P)), np.zeros((RN, P)),
        np.zeros((st.history, Wb), dtype=np.int8), np.zeros((st.history, Wb), dtype=np.int64),
        np.zeros((st.history, Wb)), np.zeros((st.history, Wb)), np.zeros(st.history, dtype=np.int64),
        np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int64), np.zeros(cap),
        np.zeros(cap), np.zeros(cap, dtype=np.int64), np.arange(cap - 1, -1, -1, dtype=np.int64),
        np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int64),
        np.zeros(tcap, dtype=np.int8), np.zeros(tcap, dtype=np.int64), np.zeros(tcap, dtype=np.int64),
        np.zeros(tcap, dtype=np.int64),
        np.zeros(4096, dtype=np.int64),
        np.zeros(8192, dtype=np.int64), np.zeros(8192, dtype=np.int64), np.zeros(8192),
        np.zeros(8192, dtype=np.bool_), np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int64),
        base_inverse_table(p, float(fcfg[_SK0])),
    )


# ---------------------------------------------------------------- heap

@njit(cache=True, inline="always")
def _heap_push(ist, hk, hi, key, idx):
    i = ist[_HEAP]
    ist[_HEAP] = i + 1
    while i > 0:
        par = (i - 1) >> 1
        if hk[par] <= key:
            break
        hk[i] = hk[par]
        hi[i] = hi[par]
        i = par
    hk[i] = key
    hi[i] = idx


@njit(cache=True, inline="always")
def _heap_pop(ist, hk, hi):
    n = ist[_HEAP] - 1
    ist[_HEAP] = n
    top = hi[0]
    key = hk[n]
    idx = hi[n]
    i = 0
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and hk[c + 1] < hk[c]:
            c += 1
        if hk[c] >= key:
            break
        hk[i] = hk[c]
        hi[i] = hi[c]
        i = c
    if n > 0:
        hk[i] = key
        hi[i] = idx
    return top


# ---------------------------------------------------------------- site table

@njit(cache=True, inline="always")
def _slot0(k1, k2, mask):
    h = hash4(np.uint64(0x5DEECE66D), 0, k1, k2)
    return np.int64(h & np.uint64(mask))


@njit(cache=True)
def _tab_find(ts, tk1, tk2, k1, k2):
    mask = ts.shape[0] - 1
    i = _slot0(k1, k2, mask)
    while True:
        s = ts[i]
        if s == _EMPTY:
            return -1
        if s == _USED and tk1[i] == k1 and tk2[i] == k2:
            return i
        i = (i + 1) & mask


@njit(cache=True)
def _tab_rebuild(ist, ts, tk1, tk2, tv):
    n = ts.shape[0]
    live = 0
    for i in range(n):
        if ts[i] == _USED:
            live += 1
    k1 = np.empty(live, dtype=np.int64)
    k2 = np.empty(live, dtype=np.int64)
    vv = np.empty(live, dtype=np.int64)
    j = 0
    for i in range(n):
        if ts[i] == _USED:
            k1[j] = tk1[i]
            k2[j] = tk2[i]
            vv[j] = tv[i]
            j += 1
        ts[i] = _EMPTY
    mask = n - 1
    for j in range(live):
        i = _slot0(k1[j], k2[j], mask)
        while ts[i] != _EMPTY:
            i = (i + 1) & mask
        ts[i] = _USED
        tk1[i] = k1[j]
        tk2[i] = k2[j]
        tv[i] = vv[j]
    ist[_TUSED] = live
    ist[_TLIVE] = live


@njit(cache=True)
def _tab_insert(ist, ts, tk1, tk2, tv, k1, k2, val):
    mask = ts.shape[0] - 1
    if 10 * (ist[_TUSED] + 1) > 7 * (mask + 1):
        _tab_rebuild(ist, ts, tk1, tk2, tv)
    i = _slot0(k1, k2, mask)
    while ts[i] == _USED:
        i = (i + 1) & mask
    if ts[i] == _EMPTY:
        ist[_TUSED] += 1
    ts[i] = _USED
    tk1[i] = k1
    tk2[i] = k2
    tv[i] = val
    ist[_TLIVE] += 1


@njit(cache=True)
def _tab_remove(ist, ts, tk1, tk2, tv, k1, k2, val):
    i = _tab_find(ts, tk1, tk2, k1, k2)
    if i >= 0 and tv[i] == val:
        ts[i] = _TOMB
        ist[_TLIVE] -= 1


# ---------------------------------------------------------------- mark field

@njit(cache=True)
def _poisson(hb, lam):
    # inverse-CDF in chunks of mean <= 200 so exp(-lam) never underflows
    total = 0
    chunk = 0
    rest = lam
    while rest > 0.0:
        m = rest if rest < 200.0 else 200.0
        rest -= m
        u = to_unit(hash4(hb, 1, chunk, 0))
        chunk += 1
        k = 0
        p = math.exp(-m)
        cum = p
        while u > cum and k < 100000:
            k += 1
            p *= m / k
            cum += p
            if p == 0.0:
                break
        total += k
    return total


@njit(cache=True)
def block_points(seed, lvl, bx, by, B, q, muhi, model, theta, n0, p0, px, py, pv, pok):
    """Marks of one block; duplicated sites keep the larger value.  Returns
    the number of points written into ``px, py, pv`` (``pok`` flags the
    surviving ones)."""
    hb = hash4(seed, TAG_BLOCK + lvl, bx, by)
    n = _poisson(hb, float(B) * float(B) * q)
    if n > px.shape[0]:
        raise ValueError("block point buffer overflow")
    mask = np.uint64(B - 1)
    for j in range(n):
        px[j] = bx * B + np.int64(hash4(hb, TAG_POINT, j, 0) & mask)
        py[j] = by * B + np.int64(hash4(hb, TAG_POINT, j, 1) & mask)
        u = uniform4(hb, TAG_POINT, j, 2)
        pr = -math.expm1(-(muhi + u * q))
        pv[j] = inverse_survival(pr, model, theta, n0, p0)
        pok[j] = True
    for j in range(n):
        for k in range(j + 1, n):
            if pok[j] and pok[k] and px[j] == px[k] and py[j] == py[k]:
                if pv[j] >= pv[k]:
                    pok[k] = False
                else:
                    pok[j] = False
    return n


@njit(cache=True, inline="always")
def _tab_tail_inverse(u, itab):
    # table start, then one Newton step: the interpolation error is below
    # 1e-7 in w and Newton squares it
    v = -math.log(u)
    x = (v - itab[0]) * itab[1]
    n = itab.shape[0] - 3
    i = int(x)
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    f = x - i
    w = itab[3 + i] * (1.0 - f) + itab[4 + i] * f
    c = itab[2] + v
    w -= (c + math.log(w) - 2.0 * w) / (1.0 / w - 2.0)
    return math.exp(w)


@njit(cache=True, inline="always")
def base_intensity(seed, model, theta, n0, p0, sk0, itab, x1, x2):
    """Base value at a site: the law conditioned on ``L <= K0``."""
    u = sk0 + uniform4(seed, TAG_INTENSITY, x1, x2) * (1.0 - sk0)
    if u >= p0:
        return 1.0 + (n0 - 1.0) * (1.0 - u) / (1.0 - p0)
    if model == 0:
        return math.sqrt(theta / u)
    return _tab_tail_inverse(u, itab)


@njit(cache=True)
def _layered_at(seed, model, theta, n0, p0, sk0, itab, q, muhi, B, x1, x2, px, py, pv, pok):
    best = 0.0
    for lvl in range(q.shape[0]):
        b = B[lvl]
        n = block_points(seed, lvl, x1 // b, x2 // b, b, q[lvl], muhi[lvl], model, theta, n0, p0,
                         px, py, pv, pok)
        for j in range(n):
            if pok[j] and px[j] == x1 and py[j] == x2 and pv[j] > best:
                best = pv[j]
    if best > 0.0:
        return best
    return base_intensity(seed, model, theta, n0, p0, sk0, itab, x1, x2)


@njit(cache=True)
def _layered_block(seed, model, theta, n0, p0, sk0, itab, q, muhi, B, x1lo, x2lo, w, h):
    # every block meeting the rectangle is generated once per level
    out = np.zeros((h, w))
    px = np.zeros(8192, dtype=np.int64)
    py = np.zeros(8192, dtype=np.int64)
    pv = np.zeros(8192)
    pok = np.zeros(8192, dtype=np.bool_)
    for lvl in range(q.shape[0]):
        b = B[lvl]
        for bx in range(x1lo // b, (x1lo + w - 1) // b + 1):
            for by in range(x2lo // b, (x2lo + h - 1) // b + 1):
                n = block_points(seed, lvl, bx, by, b, q[lvl], muhi[lvl], model, theta, n0, p0,
                                 px, py, pv, pok)
                for j in range(n):
                    c = px[j] - x1lo
                    r = py[j] - x2lo
                    if pok[j] and 0 <= c < w and 0 <= r < h and pv[j] > out[r, c]:
                        out[r, c] = pv[j]
    for r in range(h):
        for c in range(w):
            if out[r, c] == 0.0:
                out[r, c] = base_intensity(seed, model, theta, n0, p0, sk0, itab, x1lo + c, x2lo + r)
    return out


def layered_intensity(env: StreamingTreeEnvironment, x1lo: int, x2lo: int, w: int, h: int) -> np.ndarray:
    """Intensities of the layered field on a rectangle, by direct lookup."""
    st = new_state(env)
    seed, code, theta, n0, p0 = kernel_args(env.intensity)
    return _layered_block(seed, code, theta, n0, p0, st.fcfg[_SK0], st.itab, st.lev_q, st.lev_muhi, st.lev_B,
                          x1lo, x2lo, w, h)


# ---------------------------------------------------------------- sweep

@njit(cache=True)
def _max_index(model, L):
    if model == 0:
        return np.int64(math.floor(L))
    return np.int64(stair_edge_count(L) - 1)


@njit(cache=True)
def _activate_block(st, lvl, bx, by, s_c):
    icfg, fcfg = st.icfg, st.fcfg
    model = icfg[_MODEL]
    px, py, pv, pok, ist, free, a_L = st.px, st.py, st.pv, st.pok, st.ist, st.free, st.a_L
    t_val = st.t_val
    n = block_points(st.seed[0], lvl, bx, by, st.lev_B[lvl], st.lev_q[lvl], st.lev_muhi[lvl], model,
                     fcfg[_THETA], fcfg[_N0], fcfg[_P0], px, py, pv, pok)
    for j in range(n):
        if not pok[j]:
            continue
        y1 = px[j]
        y2 = py[j]
        L = pv[j]
        sy = y1 + y2
        mm = _max_index(model, L)
        if sy + mm < s_c:
            continue  # already behind the sweep
        e = _tab_find(st.t_state, st.t_k1, st.t_k2, y1, y2)
        if e >= 0:
            if a_L[t_val[e]] >= L:
                continue  # a larger mark at a higher level owns this site
            ist[_ANOM] += 1
            continue
        if ist[_FREE] == 0:
            raise ValueError("stream anchor capacity exhausted")
        ist[_FREE] -= 1
        idx = free[ist[_FREE]]
        st.a_y1[idx] = y1
        st.a_y2[idx] = y2
        a_L[idx] = L
        st.a_maxm[idx] = mm
        st.a_slope[idx] = stair_slope(L) if model == 1 else 0.0
        _tab_insert(ist, st.t_state, st.t_k1, st.t_k2, t_val, y1, y2, idx)
        _heap_push(st.ist, st.hkey, st.hidx, sy if sy > s_c else s_c, idx)
        ist[_MADE] += 1
    alive = free.shape[0] - ist[_FREE]
    if alive > ist[_PEAK]:
        ist[_PEAK] = alive


@njit(cache=True)
def _activation_pass(st, s_c, lo_c):
    icfg = st.icfg
    Wb = icfg[_WB]
    lead = icfg[_LEAD]
    for lvl in range(icfg[_NL] - 1, -1, -1):
        B = st.lev_B[lvl]
        reach = st.lev_reach[lvl]
        y1lo = lo_c - reach
        y1hi = lo_c + Wb + lead
        slo = s_c - reach
        shi = s_c + lead
        bx0 = y1lo // B
        bx1 = y1hi // B
        by0 = (slo - y1hi) // B
        by1 = (shi - y1lo) // B
        ob = st.lev_box[lvl]
        if ob[0] == bx0 and ob[1] == bx1 and ob[2] == by0 and ob[3] == by1:
            continue
        for bx in range(bx0, bx1 + 1):
            for by in range(by0, by1 + 1):
                # bounds are monotone, so only blocks outside the previous
                # rectangle are new
                if ob[0] <= bx <= ob[1] and ob[2] <= by <= ob[3]:
                    continue
                _activate_block(st, lvl, bx, by, s_c)
        ob[0] = bx0
        ob[1] = bx1
        ob[2] = by0
        ob[3] = by1


@njit(cache=True, inline="always")
def _gap(x, lo, wb):
    if x < lo:
        return lo - x
    if x >= lo + wb:
        return x - (lo + wb - 1)
    return 0


@njit(cache=True, inline="always")
def _paint_mark(a_y1, a_y2, a_L, a_slope, a_maxm, near1, near2, idx, s, lo, row, pm, model, Wb):
    """Paint the row-``s`` cells of a mark; returns the next row on which it
    can touch the band, or -1 once it is spent."""
    y1 = a_y1[idx]
    m = s - (y1 + a_y2[idx])
    L = a_L[idx]
    if model == 0:
        c1 = y1  # vertical side -> lambda_1
        c2 = y1 + m  # horizontal side -> lambda_2
        if 0 <= c1 - lo < Wb and L > near1[row, c1 & pm]:
            near1[row, c1 & pm] = L
        if 0 <= c2 - lo < Wb and L > near2[row, c2 & pm]:
            near2[row, c2 & pm] = L
    else:
        a, b, hor = stair_point(m, a_slope[idx])
        c2 = y1 + a
        c1 = y1 + b
        if 0 <= c2 - lo < Wb:
            if hor:
                if L > near2[row, c2 & pm]:
                    near2[row, c2 & pm] = L
            elif L > near1[row, c2 & pm]:
                near1[row, c2 & pm] = L
        if 0 <= c1 - lo < Wb:
            if hor:
                if L > near1[row, c1 & pm]:
                    near1[row, c1 & pm] = L
            elif L > near2[row, c1 & pm]:
                near2[row, c1 & pm] = L
    g = min(_gap(c1, lo, Wb), _gap(c2, lo, Wb))
    if g < 1:
        g = 1
    if m + g > a_maxm[idx]:
        return -1
    return s + g


@njit(cache=True)
def _process_marks(st, s, lo):
    # Marks due on every row sit in ``act``; the heap only holds the ones
    # that are away from the band.  Arrays are pulled out of ``st`` once:
    # going through the tuple inside the loops is an order of magnitude
    # slower.
    icfg = st.icfg
    model = icfg[_MODEL]
    Wb = icfg[_WB]
    row = s & (icfg[_RN] - 1)
    pm = icfg[_P] - 1
    ist, act, hk, hi, free = st.ist, st.act, st.hkey, st.hidx, st.free
    a_y1, a_y2, a_L, a_slope, a_maxm = st.a_y1, st.a_y2, st.a_L, st.a_slope, st.a_maxm
    near1, near2, sup = st.near1, st.near2, st.sup
    nrel = 0
    rel = st.rel  # spent marks, released after the loops
    ist[_NSUP] = 0
    na = ist[_NACT]
    w = 0
    for t in range(na):
        idx = act[t]
        nxt = _paint_mark(a_y1, a_y2, a_L, a_slope, a_maxm, near1, near2, idx, s, lo, row, pm, model, Wb)
        if nxt < 0:
            rel[nrel] = idx
            nrel += 1
        elif nxt == s + 1:
            act[w] = idx
            w += 1
        else:
            _heap_push(ist, hk, hi, nxt, idx)
    while ist[_HEAP] > 0 and hk[0] <= s:
        idx = _heap_pop(ist, hk, hi)
        ist[_POPS] += 1
        m = s - (a_y1[idx] + a_y2[idx])
        if m > a_maxm[idx]:
            rel[nrel] = idx
            nrel += 1
            continue
        if m <= 0:
            if m == 0:
                k = ist[_NSUP]
                sup[k] = a_y1[idx]
                ist[_NSUP] = k + 1
                ist[_NREG] += 1
                act[w] = idx
                w += 1
            else:
                _heap_push(ist, hk, hi, s - m, idx)
            continue
        nxt = _paint_mark(a_y1, a_y2, a_L, a_slope, a_maxm, near1, near2, idx, s, lo, row, pm, model, Wb)
        if nxt < 0:
            rel[nrel] = idx
            nrel += 1
        elif nxt == s + 1:
            act[w] = idx
            w += 1
        else:
            _heap_push(ist, hk, hi, nxt, idx)
    ist[_NACT] = w
    ts, tk1, tk2, tv = st.t_state, st.t_k1, st.t_k2, st.t_val
    for t in range(nrel):
        idx = rel[t]
        _tab_remove(ist, ts, tk1, tk2, tv, a_y1[idx], a_y2[idx], idx)
        free[ist[_FREE]] = idx
        ist[_FREE] += 1


@njit(cache=True)
def _sweep_base(st, s, lo):
    icfg, fcfg = st.icfg, st.fcfg
    model = icfg[_MODEL]
    K0 = icfg[_K0]
    Wb = icfg[_WB]
    rn = icfg[_RN] - 1
    pm = icfg[_P] - 1
    theta, n0, p0, sk0 = fcfg[_THETA], fcfg[_N0], fcfg[_P0], fcfg[_SK0]
    seed = st.seed[0]
    near1, near2, itab = st.near1, st.near2, st.itab
    nsup = st.ist[_NSUP]
    sup = st.sup
    if nsup > 1:
        sup[:nsup] = np.sort(sup[:nsup])
    j = 0
    for y1 in range(lo - K0 - 2, lo + Wb + K0 + 3):
        while j < nsup and sup[j] < y1:
            j += 1
        if j < nsup and sup[j] == y1:
            continue
        y2 = s - y1
        L = base_intensity(seed, model, theta, n0, p0, sk0, itab, y1, y2)
        if model == 0:
            n = int(math.floor(L))
            for k in range(1, n + 1):
                row = (s + k) & rn
                if lo <= y1 < lo + Wb + k and L > near1[row, y1 & pm]:
                    near1[row, y1 & pm] = L
                c = y1 + k
                if lo <= c < lo + Wb + k and L > near2[row, c & pm]:
                    near2[row, c & pm] = L
        else:
            slope = stair_slope(L)
            ne = stair_edge_count(L)
            a = 0
            b = 0
            for k in range(ne):
                hor = b == np.int64(math.floor(a * slope))
                if k >= 1:
                    row = (s + k) & rn
                    c2 = y1 + a
                    c1 = y1 + b
                    if lo <= c2 < lo + Wb + k:
                        if hor:
                            if L > near2[row, c2 & pm]:
                                near2[row, c2 & pm] = L
                        elif L > near1[row, c2 & pm]:
                            near1[row, c2 & pm] = L
                    if lo <= c1 < lo + Wb + k:
                        if hor:
                            if L > near1[row, c1 & pm]:
                                near1[row, c1 & pm] = L
                        elif L > near2[row, c1 & pm]:
                            near2[row, c1 & pm] = L
                if hor:
                    a += 1
                else:
                    b += 1


@njit(cache=True)
def _finalize(st, s, lo, store):
    icfg = st.icfg
    Wb = icfg[_WB]
    row = s & (icfg[_RN] - 1)
    pm = icfg[_P] - 1
    near1, near2 = st.near1, st.near2
    hdir, hh, hlam1, hlam2, hlo, ist = st.hdir, st.hh, st.hlam1, st.hlam2, st.hlo, st.ist
    if store:
        hr = s & (icfg[_RH] - 1)
        pr = (s - 1) & (icfg[_RH] - 1)
        have_prev = s - 1 >= ist[_S0]
        plo = hlo[pr]
        for j in range(Wb):
            x = lo + j
            l1 = near1[row, x & pm]
            l2 = near2[row, x & pm]
            if l1 <= 0.0 or l2 <= 0.0:
                ist[_UNCOV] += 1
            if l2 < l1:
                d = 2
            else:
                d = 1
                if l1 == l2:
                    ist[_TIES] += 1
            h = 0
            if have_prev:
                j1 = x - 1 - plo
                if 0 <= j1 < Wb and hdir[pr, j1] == 1:
                    h = hh[pr, j1] + 1
                j2 = x - plo
                if 0 <= j2 < Wb and hdir[pr, j2] == 2 and hh[pr, j2] + 1 > h:
                    h = hh[pr, j2] + 1
            hdir[hr, j] = d
            hh[hr, j] = h
            hlam1[hr, j] = l1
            hlam2[hr, j] = l2
        hlo[hr] = lo
    near1[row, :] = 0.0
    near2[row, :] = 0.0
    ist[_FRONT] = s


@njit(cache=True)
def _advance(st, s, lo, store):
    if s - st.ist[_LASTPASS] >= st.icfg[_PASS]:
        _activation_pass(st, s, lo)
        st.ist[_LASTPASS] = s
    _process_marks(st, s, lo)
    _sweep_base(st, s, lo)
    _finalize(st, s, lo, store)


@njit(cache=True)
def _start(st, s0, lo):
    """Warm up the rings so that row ``s0`` is the first complete row."""
    K0 = st.icfg[_K0]
    sw = s0 - K0 - 4
    st.ist[_S0] = s0
    st.ist[_LASTPASS] = sw - st.icfg[_PASS] - 1
    for s in range(sw, s0):
        _advance(st, s, lo, False)


@njit(cache=True, nogil=True)
def _sweep_rows(st, s0, los, out_l1, out_l2, out_d, out_h):
    _start(st, s0, los[0])
    Wb = st.icfg[_WB]
    hm = st.icfg[_RH] - 1
    for k in range(los.shape[0]):
        s = s0 + k
        _advance(st, s, los[k], True)
        hr = s & hm
        for j in range(Wb):
            out_l1[k, j] = st.hlam1[hr, j]
            out_l2[k, j] = st.hlam2[hr, j]
            out_d[k, j] = st.hdir[hr, j]
            out_h[k, j] = st.hh[hr, j]


@dataclass(frozen=True)
class BandSweep:
    """Rows ``s0 .. s0 + n - 1`` of a band sweep; row ``k`` covers
    ``x1 = lo[k] + j``, ``x2 = s0 + k - x1``."""

    s0: int
    lo: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    direction: np.ndarray
    h: np.ndarray
    stats: dict


def sweep_band(env: StreamingTreeEnvironment, s0: int, lo) -> BandSweep:
    """Sweep a band with a prescribed ``lo`` sequence (steps of 0 or 1)."""
    lo = np.asarray(lo, dtype=np.int64)
    if lo.size and np.any(np.diff(lo) < 0) | np.any(np.diff(lo) > 1):
        raise ConfigError("band offsets must advance by 0 or 1 per row")
    st = new_state(env)
    Wb = env.settings.band_width
    n = lo.size
    l1 = np.zeros((n, Wb))
    l2 = np.zeros((n, Wb))
    d = np.zeros((n, Wb), dtype=np.int8)
    h = np.zeros((n, Wb), dtype=np.int64)
    _sweep_rows(st, int(s0), lo, l1, l2, d, h)
    return BandSweep(int(s0), lo, l1, l2, d, h, _stats(st))


def _stats(st) -> dict:
    i = st.ist
    return {"ties": int(i[_TIES]), "uncovered": int(i[_UNCOV]), "anomalies": int(i[_ANOM]),
            "marks": int(i[_MADE]), "peak_alive": int(i[_PEAK]), "registered": int(i[_NREG]), "pops": int(i[_POPS])}


@njit(cache=True, nogil=True)
def _stream_walk(st, x1, x2, steps, wseed, cps, A, backfill):
    icfg = st.icfg
    Wb = icfg[_WB]
    RH = icfg[_RH]
    hm = RH - 1
    half = Wb // 2
    s = x1 + x2
    s0 = s - backfill
    lo = x1 - half
    _start(st, s0, lo)
    for r in range(s0, s + 1):
        _advance(st, r, lo, True)
    ncp = cps.shape[0]
    out = np.zeros((ncp, 3), dtype=np.int64)
    flags = np.zeros(steps, dtype=np.uint8)
    lw = np.zeros(4)
    avail = np.ones(4, dtype=np.bool_)
    hdir, hh, hlo, ist = st.hdir, st.hh, st.hlo, st.ist
    k = 0
    fol = 0
    n = 0
    exited = False
    while n < steps:
        s = x1 + x2
        front = ist[_FRONT]
        if s - 1 < s0 or s - 1 <= front - RH:
            exited = True
            break
        r0 = s & hm
        r1 = (s - 1) & hm
        j = x1 - hlo[r0]
        j1 = x1 - 1 - hlo[r1]
        j2 = x1 - hlo[r1]
        if not (0 <= j < Wb and 0 <= j1 < Wb and 0 <= j2 < Wb):
            exited = True
            break
        d = hdir[r0, j]
        w = (hh[r0, j] + 1.0) ** A
        lw[0] = w if d == 1 else 0.0
        lw[1] = w if d == 2 else 0.0
        lw[2] = (hh[r1, j1] + 1.0) ** A if hdir[r1, j1] == 1 else 0.0
        lw[3] = (hh[r1, j2] + 1.0) ** A if hdir[r1, j2] == 2 else 0.0
        i = choose_move(lw, avail, uniform4(wseed, TAG_WALK, n, 0))
        if i == d - 1:
            fol += 1
            flags[n] = 1
        if i == 0:
            x1 += 1
        elif i == 1:
            x2 += 1
        elif i == 2:
            x1 -= 1
        else:
            x2 -= 1
        n += 1
        if x1 + x2 > front:
            flo = hlo[front & hm]
            _advance(st, front + 1, flo + 1 if x1 - half > flo else flo, True)
        while k < ncp and cps[k] == n:
            out[k, 0] = x1
            out[k, 1] = x2
            out[k, 2] = fol
            k += 1
    return out, k, n, x1, x2, exited, flags


def run_stream_walk(env: StreamingTreeEnvironment, cfg: WalkConfig) -> Trajectory:
    cps = checkpoint_schedule(cfg.steps, cfg.gamma, cfg.checkpoints)
    st = new_state(env)
    out, k, n, x1, x2, exited, flags = _stream_walk(
        st, cfg.start[0], cfg.start[1], cfg.steps, as_seed(cfg.seed), cps,
        float(env.conductance.A), env.settings.backfill)
    stats = _stats(st)
    if stats["uncovered"] or stats["anomalies"]:
        raise InvariantError(f"streaming environment inconsistency: {stats}")
    return Trajectory(cfg, cps[:k].copy(), out[:k, 0].copy(), out[:k, 1].copy(), out[:k, 2].copy(),
                      int(n), (int(x1), int(x2)), bool(exited), tail_fraction(flags, int(n)), stats)
