"""Statistical verifiers: tail tables, speed and oscillation summaries, and
the exact Varopoulos-Carne check on small reversible chains."""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conductance import ConductanceField
from .errors import ConfigError, DomainError, InsufficientDataError, NumericError
from .intensity import Box, IntensityParams
from .lattice import build_forest, paint_lambda
from .walker import Trajectory

Z95 = 1.959963984540054


class Scaling(Enum):
    N_LINEAR = "N_LINEAR"  # n P(h > n)
    N_LOG2 = "N_LOG2"  # n / ln^2 n P(h > n)
    T_LOGT = "T_LOGT"  # t / ln t P(lambda > t)


def scale_factor(scaling: Scaling | str, t) -> np.ndarray:
    s = Scaling(scaling) if not isinstance(scaling, Scaling) else scaling
    t = np.asarray(t, dtype=float)
    if s is Scaling.N_LINEAR:
        return t.copy()
    if np.any(t <= 1.0):
        raise DomainError(f"{s.value} scaling needs thresholds > 1")
    if s is Scaling.N_LOG2:
        return t / np.log(t) ** 2
    return t / np.log(t)


def wilson_interval(k, n, z: float = Z95):
    """Wilson score interval; an empty bucket gets the rule-of-three
    interval ``[0, 3/n]``."""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(n <= 0):
        raise InsufficientDataError("Wilson interval needs n > 0")
    p = k / n
    z2 = z * z
    den = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / den
    lo = np.clip(centre - half, 0.0, 1.0)
    hi = np.clip(centre + half, 0.0, 1.0)
    lo = np.where(k == 0, 0.0, lo)
    hi = np.where(k == 0, np.minimum(1.0, 3.0 / n), hi)
    return lo, hi


@dataclass(frozen=True)
class TailTable:
    """Empirical survival ``P(X > t)`` on a threshold grid."""

    thresholds: np.ndarray
    counts: np.ndarray
    totals: np.ndarray
    survival: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    scaling: Scaling
    excluded: tuple = ()

    def column(self, scaling: Scaling | str | None = None):
        """Scaled survival and its interval, ``(value, lower, upper)``."""
        f = scale_factor(scaling or self.scaling, self.thresholds)
        return f * self.survival, f * self.lower, f * self.upper

    @property
    def scaled(self) -> np.ndarray:
        return self.column()[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def rows(self) -> list[list]:
        v, lo, hi = self.column()
        return [[_num(t), int(c), int(n), float(p), float(a), float(b), float(s), float(sl), float(sh)]
                for t, c, n, p, a, b, s, sl, sh in zip(self.thresholds, self.counts, self.totals,
                                                       self.survival, self.lower, self.upper, v, lo, hi)]

    header = ("threshold", "count", "total", "survival", "lower", "upper", "scaled", "scaled_lower",
              "scaled_upper")


def _num(t):
    t = float(t)
    return int(t) if t.is_integer() else t


def tail_table(samples, thresholds, scaling: Scaling | str = Scaling.N_LINEAR, depth=None,
               min_certified: int = 1) -> TailTable:
    """Survival table of ``samples`` at ``thresholds``.

    With ``depth`` given (per-sample certification depth, e.g. box depth of
    the site a height was read at), a threshold ``t`` is usable only on
    samples with ``depth > t``: there a computed height decides ``{h > t}``
    exactly.  Thresholds certified by fewer than ``min_certified`` samples
    are dropped with a warning, and all kept thresholds share the set of
    samples certified for the largest one, so the column is monotone.
    """
    scaling = Scaling(scaling) if not isinstance(scaling, Scaling) else scaling
    x = np.asarray(samples, dtype=float).ravel()
    th = np.asarray(thresholds, dtype=float).ravel()
    if th.size == 0:
        raise ConfigError("tail_table needs at least one threshold")
    if np.any(np.diff(th) <= 0):
        raise ConfigError("thresholds must be strictly increasing")
    if x.size == 0:
        raise InsufficientDataError("tail_table got no samples")
    excluded = ()
    if depth is not None:
        d = np.asarray(depth, dtype=float).ravel()
        if d.shape != x.shape:
            raise ConfigError("depth must match samples")
        ok = np.array([np.count_nonzero(d > t) >= max(1, min_certified) for t in th])
        if not ok.all():
            excluded = tuple(_num(t) for t in th[~ok])
            warnings.warn(f"thresholds {list(excluded)} exceed the certification depth; excluded",
                          stacklevel=2)
            th = th[ok]
            if th.size == 0:
                raise InsufficientDataError("no threshold is certified by the available depth")
        x = x[d > th[-1]]
    xs = np.sort(x)
    n = xs.size
    counts = n - np.searchsorted(xs, th, side="right")
    totals = np.full(th.size, n, dtype=np.int64)
    surv = counts / n
    lo, hi = wilson_interval(counts, totals)
    return TailTable(th, counts.astype(np.int64), totals, surv, lo, hi, scaling, excluded)


def pool_tables(tables: list[TailTable]) -> TailTable:
    """Pool tables computed on the same thresholds by adding counts."""
    if not tables:
        raise InsufficientDataError("nothing to pool")
    th = tables[0].thresholds
    for t in tables[1:]:
        if not np.array_equal(t.thresholds, th):
            raise ConfigError("pooled tables must share thresholds")
    c = sum(t.counts for t in tables)
    n = sum(t.totals for t in tables)
    lo, hi = wilson_interval(c, n)
    ex = tuple(sorted({e for t in tables for e in t.excluded}))
    return TailTable(th, c, n, c / n, lo, hi, tables[0].scaling, ex)


def within_band(values, factor: float) -> bool:
    """``min > 0`` and ``max / min <= factor``."""
    v = np.asarray(values, dtype=float)
    return bool(v.size and v.min() > 0 and v.max() / v.min() <= factor)


# ---------------------------------------------------------------- speed

@dataclass(frozen=True)
class SpeedReport:
    n: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    s_diag: np.ndarray
    s_anti: np.ndarray
    burn_in_fraction: float
    burn_in_step: int
    anti_min: float
    anti_max: float
    final_v: tuple[float, float]
    final_n: int

    @property
    def anti_range(self) -> float:
        return self.anti_max - self.anti_min

    @property
    def post(self) -> np.ndarray:
        """Mask of checkpoints after burn-in."""
        return self.n >= self.burn_in_step

    @property
    def final_s_diag(self) -> float:
        return self.final_v[0] + self.final_v[1]

    @property
    def final_s_anti(self) -> float:
        return self.final_v[1] - self.final_v[0]


def speed_report(traj: Trajectory, burn_in_fraction: float = 0.1) -> SpeedReport:
    """Velocity columns at every checkpoint.  Burn-in drops checkpoints with
    ``n < burn_in_fraction * final_n``; with geometric checkpoints a fraction
    of the checkpoint count would only drop the first handful of steps."""
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ConfigError("burn_in_fraction must be in [0, 1)")
    n = np.asarray(traj.n, dtype=np.int64)
    if n.size == 0:
        raise InsufficientDataError("trajectory has no checkpoints")
    x1 = np.asarray(traj.x1, dtype=float)
    x2 = np.asarray(traj.x2, dtype=float)
    v1 = x1 / n
    v2 = x2 / n
    sd = v1 + v2
    sa = v2 - v1
    b = int(math.ceil(burn_in_fraction * traj.final_n))
    post = n >= b
    if np.count_nonzero(post) < 2:
        raise InsufficientDataError(
            f"need >= 2 checkpoints after burn-in (step {b}), have {int(np.count_nonzero(post))}")
    fv = (traj.final[0] / traj.final_n, traj.final[1] / traj.final_n)
    return SpeedReport(n, v1, v2, sd, sa, float(burn_in_fraction), b, float(sa[post].min()),
                       float(sa[post].max()), fv, int(traj.final_n))


def sup_speed(report: SpeedReport) -> np.ndarray:
    """``||X_n||_inf / n`` per checkpoint."""
    return np.maximum(np.abs(report.v1), np.abs(report.v2))


def trend_slope(n, values) -> float:
    """Least-squares slope of ``values`` against ``ln n``."""
    x = np.log(np.asarray(n, dtype=float))
    y = np.asarray(values, dtype=float)
    if x.size < 2:
        raise InsufficientDataError("trend needs >= 2 points")
    x = x - x.mean()
    den = float(x @ x)
    if den == 0.0:
        raise InsufficientDataError("trend needs distinct n")
    return float(x @ (y - y.mean()) / den)


@dataclass(frozen=True)
class OscillationResult:
    passed: bool
    fraction: float
    ranges: tuple[float, ...]
    delta: float
    threshold: float


def oscillation_test(reports: list[SpeedReport], delta: float = 0.1,
                     threshold: float = 0.5) -> OscillationResult:
    """Pass when at least ``threshold`` of the runs have a post-burn-in
    ``s_anti`` range above ``delta``."""
    if not reports:
        raise InsufficientDataError("oscillation_test needs at least one report")
    r = tuple(float(x.anti_range) for x in reports)
    frac = sum(v > delta for v in r) / len(r)
    return OscillationResult(frac >= threshold, frac, r, float(delta), float(threshold))


# ---------------------------------------------------------------- Varopoulos-Carne

@dataclass(frozen=True)
class VcReport:
    states: int
    n_max: int
    max_ratio: float
    violations: tuple = ()
    pairs_checked: int = 0
    bound_multiplier: float = 1.0

    @property
    def ok(self) -> bool:
        return not self.violations


def conductance_matrix(field: ConductanceField, logw_cap: float = 200.0) -> np.ndarray:
    """Symmetric weight matrix of a box field (edges leaving the box are
    absent, i.e. the boundary reflects)."""
    H, W = field.box.shape
    lh = np.asarray(field.logw_h, dtype=float)
    lv = np.asarray(field.logw_v, dtype=float)
    vals = np.concatenate([lh.ravel(), lv.ravel()])
    if vals.size and (not np.all(np.isfinite(vals)) or vals.max() > logw_cap):
        raise NumericError(f"log-weights above {logw_cap} cannot be exponentiated directly")
    shift = vals.max() if vals.size else 0.0
    Wm = np.zeros((H * W, H * W))
    for r in range(H):
        for c in range(W - 1):
            i = r * W + c
            Wm[i, i + 1] = Wm[i + 1, i] = math.exp(lh[r, c] - shift)
    for r in range(H - 1):
        for c in range(W):
            i = r * W + c
            Wm[i, i + W] = Wm[i + W, i] = math.exp(lv[r, c] - shift)
    return Wm


def bfs_distances(adj: np.ndarray) -> np.ndarray:
    """All-pairs graph distance by breadth-first search; ``-1`` when
    unreachable."""
    n = adj.shape[0]
    nb = [np.flatnonzero(adj[i]) for i in range(n)]
    D = np.full((n, n), -1, dtype=np.int64)
    for s in range(n):
        D[s, s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for v in nb[u]:
                if D[s, v] < 0:
                    D[s, v] = D[s, u] + 1
                    q.append(v)
    return D


def vc_check_matrix(weights: np.ndarray, n_max: int, bound_multiplier: float = 1.0,
                    rel_tol: float = 1e-9, max_states: int = 400) -> VcReport:
    """Check ``L^n(x,y) <= 2 sqrt(pi(y)/pi(x)) exp(-d(x,y)^2 / 2n)`` for all
    pairs and ``n = 1..n_max``; pairs with ``L^n(x,y) = 0`` are vacuous.
    ``bound_multiplier`` scales the bound (a value below 1 is a negative
    control that must produce violations)."""
    Wm = np.asarray(weights, dtype=float)
    if Wm.ndim != 2 or Wm.shape[0] != Wm.shape[1]:
        raise ConfigError("weight matrix must be square")
    N = Wm.shape[0]
    if N > max_states:
        raise ConfigError(f"vc_check is limited to {max_states} states, got {N}")
    if n_max < 1:
        raise ConfigError("n_max must be >= 1")
    if not np.allclose(Wm, Wm.T, rtol=0, atol=0):
        raise DomainError("conductances must be symmetric")
    if np.any(Wm < 0) or not np.all(np.isfinite(Wm)):
        raise NumericError("weights must be finite and non-negative")
    pi = Wm.sum(axis=1)
    D = bfs_distances(Wm > 0)
    if N < 2 or np.any(pi <= 0) or np.any(D < 0):
        raise DomainError("the chain is not irreducible")
    P = Wm / pi[:, None]
    ratio_pi = np.sqrt(pi[None, :] / pi[:, None])
    d2 = D.astype(float) ** 2
    L = np.eye(N)
    worst = 0.0
    viol = []
    checked = 0
    for n in range(1, n_max + 1):
        L = L @ P
        if not np.all(np.isfinite(L)):
            raise NumericError(f"transition power {n} is not finite")
        bound = bound_multiplier * 2.0 * ratio_pi * np.exp(-d2 / (2.0 * n))
        live = L > 0
        checked += int(np.count_nonzero(live))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(live, L / bound, 0.0)
        worst = max(worst, float(r.max()))
        bad = np.argwhere(r > 1.0 + rel_tol)
        for x, y in bad[:100]:
            viol.append((n, int(x), int(y), float(L[x, y]), float(bound[x, y])))
    return VcReport(N, int(n_max), worst, tuple(viol), checked, float(bound_multiplier))


def vc_check(field: ConductanceField, n_max: int, bound_multiplier: float = 1.0,
             logw_cap: float = 200.0) -> VcReport:
    """Varopoulos-Carne check on the reflecting chain of a small box field."""
    return vc_check_matrix(conductance_matrix(field, logw_cap), n_max, bound_multiplier)


def random_kernel(rng: np.random.Generator, width: int, height: int, hi: float = 3.0) -> ConductanceField:
    """Box field with i.i.d. uniform ``[0, hi]`` log-weights."""
    box = Box((0, 0), width, height, 0)
    return ConductanceField(box, rng.uniform(0, hi, (height, width - 1)),
                            rng.uniform(0, hi, (height - 1, width)))


def stationary_distance(weights: np.ndarray, n: int) -> float:
    """Max distance between the averaged powers ``(L^n + L^{n+1}) / 2`` and
    the normalized reversible measure.  Averaging two consecutive powers
    removes the period-2 oscillation of bipartite graphs such as grids."""
    Wm = np.asarray(weights, dtype=float)
    pi = Wm.sum(axis=1)
    P = Wm / pi[:, None]
    Ln = np.linalg.matrix_power(P, n)
    A = 0.5 * (Ln + Ln @ P)
    return float(np.abs(A - (pi / pi.sum())[None, :]).max())


# ---------------------------------------------------------------- margins

@dataclass(frozen=True)
class MarginSensitivity:
    margins: tuple[int, ...]
    tables: tuple[TailTable, ...]
    max_abs_diff: dict = field(default_factory=dict)
    within_ci: dict = field(default_factory=dict)
    lambda_disagreement: dict = field(default_factory=dict)


def margin_sensitivity(params: IntensityParams, box: Box, margins, thresholds,
                       scaling: Scaling | str = Scaling.N_LINEAR, quantity: str = "h") -> MarginSensitivity:
    """Tail tables of ``h`` (or ``lambda1``/``lambda2``) for each margin, plus
    pairwise survival differences and site-level lambda disagreement."""
    margins = tuple(int(m) for m in margins)
    if len(margins) < 2:
        raise ConfigError("margin_sensitivity needs >= 2 margins")
    tabs = []
    lams = []
    for m in margins:
        b = box.with_margin(m)
        if quantity == "h":
            lam, anc, hf = build_forest(params, b)
            tabs.append(tail_table(hf.h, thresholds, scaling, depth=hf.depth))
        elif quantity in ("lambda1", "lambda2"):
            lam = paint_lambda(params, b)
            v = lam.lam1 if quantity == "lambda1" else lam.lam2
            tabs.append(tail_table(v, thresholds, scaling))
        else:
            raise ConfigError(f"unknown quantity {quantity!r}")
        lams.append(lam)
    diffs, within, dis = {}, {}, {}
    for i in range(len(margins)):
        for j in range(i + 1, len(margins)):
            a, b = tabs[i], tabs[j]
            if not np.array_equal(a.thresholds, b.thresholds):
                raise InsufficientDataError("margins certify different thresholds")
            d = np.abs(a.survival - b.survival)
            key = (margins[i], margins[j])
            diffs[key] = float(d.max())
            within[key] = bool(np.all(d <= a.widths + b.widths))
            la, lb = lams[i], lams[j]
            dis[key] = float(np.mean((la.lam1 != lb.lam1) | (la.lam2 != lb.lam2)))
    return MarginSensitivity(margins, tuple(tabs), diffs, within, dis)
