"""Random walk among conductances, simulated in log-space.

Moves are indexed in the fixed order ``(+e1, +e2, -e1, -e2)``.  Each step
consumes exactly one uniform from the walk's own hashed stream and picks the
move by inverse CDF.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._hash import TAG_WALK, as_seed, uniform4
from .conductance import ConductanceField, IidLogField, iid_logw
from .errors import ConfigError, DomainError
from .lattice import AncestralField

MOVES = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=np.int64)


@dataclass(frozen=True)
class WalkConfig:
    start: tuple[int, int]
    steps: int
    seed: int = 0
    gamma: float = 1.2
    checkpoints: tuple[int, ...] = ()
    stop_on_exit: bool = True

    def __post_init__(self):
        object.__setattr__(self, "start", (int(self.start[0]), int(self.start[1])))
        object.__setattr__(self, "checkpoints", tuple(int(c) for c in self.checkpoints))
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not self.gamma > 1.0:
            raise ConfigError(f"checkpoint ratio gamma must be > 1, got {self.gamma}")


@dataclass(frozen=True)
class Trajectory:
    """Checkpointed path of one walk.

    ``follow`` holds the cumulative number of tree-following steps at each
    checkpoint (all zeros when no ancestral function was supplied).
    """

    config: WalkConfig
    n: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    follow: np.ndarray
    final_n: int
    final: tuple[int, int]
    exited: bool
    follow_fraction_tail: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def positions(self) -> np.ndarray:
        return np.stack([self.x1, self.x2], axis=1)


def checkpoint_schedule(steps: int, gamma: float = 1.2, extra=()) -> np.ndarray:
    """Distinct ``floor(gamma**k) <= steps``, the explicit list and ``steps``."""
    pts = set()
    k = 0
    while True:
        v = math.floor(gamma**k)
        if v > steps:
            break
        pts.add(v)
        k += 1
    pts.update(int(c) for c in extra if 1 <= c <= steps)
    pts.add(int(steps))
    return np.array(sorted(pts), dtype=np.int64)


def probs_from_logw(logw) -> np.ndarray:
    """Normalized ``exp(logw)`` via log-sum-exp."""
    lw = np.asarray(logw, dtype=float)
    m = lw.max()
    e = np.exp(lw - m)
    return e / e.sum()


def log_probs_from_logw(logw) -> np.ndarray:
    lw = np.asarray(logw, dtype=float)
    m = lw.max()
    return lw - (m + math.log(np.exp(lw - m).sum()))


def _incident_logw(field, x) -> np.ndarray:
    x1, x2 = int(x[0]), int(x[1])
    if isinstance(field, IidLogField):
        return np.array([field.logw((x1, x2), 1), field.logw((x1, x2), 2),
                         field.logw((x1 - 1, x2), 1), field.logw((x1, x2 - 1), 2)])
    if isinstance(field, ConductanceField):
        ox, oy = field.box.origin
        c, r = x1 - ox, x2 - oy
        if not (1 <= c < field.box.width - 1 and 1 <= r < field.box.height - 1):
            raise DomainError(f"{(x1, x2)} and its neighbours must lie inside the box")
        return np.array([field.logw_h[r, c], field.logw_v[r, c],
                         field.logw_h[r, c - 1], field.logw_v[r - 1, c]])
    raise TypeError(f"unsupported field type {type(field).__name__}")


def transition_probs(field, x) -> np.ndarray:
    """Probabilities of ``(+e1, +e2, -e1, -e2)`` from ``x``."""
    return probs_from_logw(_incident_logw(field, x))


def stationary_log_weight(field, x) -> float:
    """``log pi(x)``: log-sum-exp of the four incident log-weights."""
    lw = _incident_logw(field, x)
    m = lw.max()
    return float(m + math.log(np.exp(lw - m).sum()))


@njit(cache=True, inline="always")
def choose_move(lw, avail, u):
    m = -np.inf
    for i in range(4):
        if avail[i] and lw[i] > m:
            m = lw[i]
    z = 0.0
    e = np.zeros(4)
    for i in range(4):
        if avail[i]:
            e[i] = math.exp(lw[i] - m)
            z += e[i]
    acc = 0.0
    target = u * z
    last = -1
    for i in range(4):
        if avail[i]:
            acc += e[i]
            last = i
            if target < acc:
                return i
    return last


@njit(cache=True, nogil=True)
def _walk_box(lh, lv, direction, track, ox, oy, x1, x2, steps, seed, cps, stop_on_exit):
    H = lv.shape[0] + 1
    W = lh.shape[1] + 1
    c = x1 - ox
    r = x2 - oy
    ncp = cps.shape[0]
    out = np.zeros((ncp, 3), dtype=np.int64)
    flags = np.zeros(steps, dtype=np.uint8)
    lw = np.zeros(4)
    avail = np.zeros(4, dtype=np.bool_)
    k = 0
    fol = 0
    n = 0
    exited = False
    while n < steps:
        avail[0] = c + 1 < W
        avail[1] = r + 1 < H
        avail[2] = c >= 1
        avail[3] = r >= 1
        if stop_on_exit and not (avail[0] and avail[1] and avail[2] and avail[3]):
            exited = True
            break
        lw[0] = lh[r, c] if avail[0] else 0.0
        lw[1] = lv[r, c] if avail[1] else 0.0
        lw[2] = lh[r, c - 1] if avail[2] else 0.0
        lw[3] = lv[r - 1, c] if avail[3] else 0.0
        i = choose_move(lw, avail, uniform4(seed, TAG_WALK, n, 0))
        if track and i == direction[r, c] - 1:
            fol += 1
            flags[n] = 1
        if i == 0:
            c += 1
        elif i == 1:
            r += 1
        elif i == 2:
            c -= 1
        else:
            r -= 1
        n += 1
        while k < ncp and cps[k] == n:
            out[k, 0] = c + ox
            out[k, 1] = r + oy
            out[k, 2] = fol
            k += 1
    return out, k, n, c + ox, r + oy, exited, flags


@njit(cache=True, nogil=True)
def _walk_iid(seed_env, inv_beta, x1, x2, steps, seed, cps):
    ncp = cps.shape[0]
    out = np.zeros((ncp, 3), dtype=np.int64)
    lw = np.zeros(4)
    avail = np.ones(4, dtype=np.bool_)
    k = 0
    for n in range(steps):
        lw[0] = iid_logw(seed_env, inv_beta, x1, x2, 1)
        lw[1] = iid_logw(seed_env, inv_beta, x1, x2, 2)
        lw[2] = iid_logw(seed_env, inv_beta, x1 - 1, x2, 1)
        lw[3] = iid_logw(seed_env, inv_beta, x1, x2 - 1, 2)
        i = choose_move(lw, avail, uniform4(seed, TAG_WALK, n, 0))
        if i == 0:
            x1 += 1
        elif i == 1:
            x2 += 1
        elif i == 2:
            x1 -= 1
        else:
            x2 -= 1
        while k < ncp and cps[k] == n + 1:
            out[k, 0] = x1
            out[k, 1] = x2
            k += 1
    return out, k, x1, x2


def tail_fraction(flags: np.ndarray, n: int, frac: float = 0.1) -> float | None:
    start = int(math.floor((1.0 - frac) * n))
    if n - start <= 0:
        return None
    return float(flags[start:n].sum()) / (n - start)


def run_walk(field, a: AncestralField | None, cfg: WalkConfig) -> Trajectory:
    """Simulate ``cfg.steps`` steps of the walk on ``field``.

    ``field`` may be a box ``ConductanceField`` (the walk stops at the box
    boundary, or reflects when ``stop_on_exit`` is false), an ``IidLogField``
    realized on the whole lattice, or a ``StreamingTreeEnvironment`` whose
    tree is generated on the fly around the walker.
    """
    from .stream import StreamingTreeEnvironment, run_stream_walk

    cps = checkpoint_schedule(cfg.steps, cfg.gamma, cfg.checkpoints)
    if isinstance(field, StreamingTreeEnvironment):
        return run_stream_walk(field, cfg)
    if isinstance(field, IidLogField):
        out, k, x1, x2 = _walk_iid(as_seed(field.params.seed), 1.0 / field.params.beta,
                                   cfg.start[0], cfg.start[1], cfg.steps, as_seed(cfg.seed), cps)
        return Trajectory(cfg, cps[:k].copy(), out[:k, 0].copy(), out[:k, 1].copy(),
                          out[:k, 2].copy(), cfg.steps, (int(x1), int(x2)), False, None)
    if not isinstance(field, ConductanceField):
        raise TypeError(f"unsupported field type {type(field).__name__}")
    box = field.box
    ox, oy = box.origin
    x1, x2 = cfg.start
    c, r = x1 - ox, x2 - oy
    inside = 0 <= c < box.width and 0 <= r < box.height
    interior = 1 <= c < box.width - 1 and 1 <= r < box.height - 1
    if not inside or (cfg.stop_on_exit and not interior):
        raise ConfigError(f"walk start {cfg.start} must lie strictly inside the box")
    track = a is not None
    if track and a.box.shape != box.shape:
        raise ConfigError("ancestral field and conductance field cover different boxes")
    direction = a.direction if track else np.zeros((1, 1), dtype=np.uint8)
    out, k, n, fx1, fx2, exited, flags = _walk_box(
        field.logw_h, field.logw_v, direction, track, ox, oy, x1, x2, cfg.steps,
        as_seed(cfg.seed), cps, cfg.stop_on_exit)
    tail = tail_fraction(flags, int(n)) if track else None
    return Trajectory(cfg, cps[:k].copy(), out[:k, 0].copy(), out[:k, 1].copy(), out[:k, 2].copy(),
                      int(n), (int(fx1), int(fx2)), bool(exited), tail)


def _log_factor(k: float, A: float) -> float:
    a, b = k**A, (k - 1.0) ** A
    m = max(math.log(2.0) + b, a, 0.0)
    lse = m + math.log(math.exp(math.log(2.0) + b - m) + math.exp(a - m) + math.exp(-m))
    return a - lse


def follow_tree_lower_bound(A: float, K: int) -> float:
    """Certified lower bound on the probability of following the tree forever.

    ``prod_{k<=K} e^{k^A} / (2 e^{(k-1)^A} + e^{k^A} + 1)`` times
    ``exp(-sum_{k>K} (2 e^{-A (k-1)^{A-1}} + e^{-k^A}))``, evaluated in
    log-space.
    """
    if not A > 1.0:
        raise DomainError(f"follow-tree bound requires A > 1, got {A!r}")
    if K < 2:
        raise ConfigError(f"K must be >= 2, got {K}")
    logp = sum(_log_factor(float(k), A) for k in range(1, K + 1))
    tail = 0.0
    k = K + 1
    while True:
        term = 2.0 * math.exp(-A * (k - 1.0) ** (A - 1.0)) + math.exp(-(k**A))
        tail += term
        if term < 1e-18:
            break
        k += 1
        if k > 10**9:
            break
    return math.exp(logp - tail)


TRAJECTORY_COLUMNS = ("n", "x1", "x2", "v1", "v2", "s_diag", "s_anti", "follow_frac_window")


def trajectory_rows(traj: Trajectory):
    prev_n, prev_f = 0, 0
    for n, x1, x2, f in zip(traj.n.tolist(), traj.x1.tolist(), traj.x2.tolist(), traj.follow.tolist()):
        win = (f - prev_f) / (n - prev_n) if traj.follow_fraction_tail is not None else float("nan")
        yield (n, x1, x2, x1 / n, x2 / n, (x1 + x2) / n, (x2 - x1) / n, win)
        prev_n, prev_f = n, f


def write_trajectory_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for row in trajectory_rows(traj):
            w.writerow([row[0], row[1], row[2]] + [repr(float(v)) for v in row[3:]])


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRAJECTORY_COLUMNS:
        from .errors import FormatError
        raise FormatError(f"{path}: unexpected trajectory header")
    data = np.array([[float(v) for v in r] for r in rows[1:]]) if len(rows) > 1 else np.zeros((0, 8))
    return {name: data[:, i] for i, name in enumerate(TRAJECTORY_COLUMNS)}
