"""Acceptance protocols, one test per criterion.

Every test prints a single ``criterion N: PASS|FAIL ...`` line with the
measured statistics and then asserts.  Run with ``pytest -m acceptance``;
the full set takes a bit over an hour on one core.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
import pytest
from oracles import chain_heights, naive_lambda

from rwrclab import analysis as an
from rwrclab.cli import run as cli_run
from rwrclab.conductance import (
    ConductanceParams, IidLogField, IidLogParams,
    log_moment_from_height_tail, survival_from_counts,
)
from rwrclab.intensity import Box, IntensityField, default_params
from rwrclab.lattice import (
    ancestral_from_lambda, build_forest, count_cycles, heights_from_ancestral, paint_lambda,
    straight_height_counts,
)
from rwrclab.stream import StreamSettings, StreamingTreeEnvironment
from rwrclab.walker import WalkConfig, follow_tree_lower_bound, run_walk

pytestmark = pytest.mark.acceptance

SEEDS20 = tuple(range(1, 21))
H_THRESHOLDS = (32, 64, 128, 256, 512)
LAMBDA_THRESHOLDS = (16, 32, 64, 128, 256, 512)
TAIL_BOX = 4096
TAIL_MARGIN = 1024
BAND = 5.0


@pytest.fixture
def report(capsys):
    def _say(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    return _say


# ---------------------------------------------------------------- 1, 2

def test_c01_forest_axioms(report):
    sites = bad_dir = bad_back = cycles = 0
    for model in ("STRAIGHT", "DIAGONAL"):
        for seed in range(1, 11):
            _, anc, _ = build_forest(default_params(model, seed=seed), Box((0, 0), 512, 512, 512))
            d = anc.direction
            sites += d.size
            bad_dir += int(np.count_nonzero((d != 1) & (d != 2)))
            # a(a(x)) for sites whose parent is inside the box
            r, c = np.indices(d.shape)
            r1 = r + (d == 2)
            c1 = c + (d == 1)
            inside = (r1 < d.shape[0]) & (c1 < d.shape[1])
            d1 = d[r1[inside], c1[inside]]
            r2 = r1[inside] + (d1 == 2)
            c2 = c1[inside] + (d1 == 1)
            bad_back += int(np.count_nonzero((r2 == r[inside]) & (c2 == c[inside])))
            cycles += count_cycles(anc)
    ok = bad_dir == 0 and bad_back == 0 and cycles == 0
    report(1, ok, f"{sites} sites over 20 boxes: {bad_dir} undirected, {bad_back} with a(a(x))=x, "
                  f"{cycles} cycles")
    assert ok


def test_c02_brute_force(report):
    mismatches = []
    for model in ("STRAIGHT", "DIAGONAL"):
        for k in range(20):
            p = default_params(model, seed=1000 + k)
            box = Box((37 * k - 300, 11 * k - 90), 32, 32, 24)
            values = IntensityField(p, box).values()
            lam = paint_lambda(p, box, values)
            n1, n2 = naive_lambda(values, box, p.model.code)
            anc = ancestral_from_lambda(lam)
            hf = heights_from_ancestral(anc)
            if not (np.array_equal(lam.lam1, n1) and np.array_equal(lam.lam2, n2)
                    and np.array_equal(hf.h, chain_heights(anc.direction))):
                mismatches.append((model, k))
    ok = not mismatches
    report(2, ok, f"40 instances of 32x32, mismatching: {mismatches or 'none'}")
    assert ok


# ---------------------------------------------------------------- 3

def test_c03_varopoulos_carne(report):
    rng = np.random.default_rng(20240531)
    worst, violations, controls = 0.0, 0, 0
    for _ in range(100):
        w, h = rng.integers(2, 6, size=2)
        field = an.random_kernel(rng, int(w), int(h), 3.0)
        r = an.vc_check(field, 50)
        worst = max(worst, r.max_ratio)
        violations += len(r.violations)
        # negative control: shrink the bound below the observed maximum
        ctl = an.vc_check(field, 50, bound_multiplier=0.5 * r.max_ratio)
        controls += bool(ctl.violations)
    ok = violations == 0 and controls == 100
    report(3, ok, f"100 kernels <= 5x5, n <= 50: {violations} violations, max ratio {worst:.4f}; "
                  f"negative control detected in {controls}/100")
    assert ok


# ---------------------------------------------------------------- 4, 5, 6

@lru_cache(maxsize=None)
def _tails(model: str, margin: int):
    """h and lambda tables of one 4096^2 box (the function is cached so the
    large arrays are built once per model and margin)."""
    p = default_params(model, seed=1)
    lam, _, hf = build_forest(p, Box((0, 0), TAIL_BOX, TAIL_BOX, margin))
    scaling = an.Scaling.N_LINEAR if model == "STRAIGHT" else an.Scaling.N_LOG2
    h = an.tail_table(hf.h, H_THRESHOLDS, scaling, depth=hf.depth)
    l1 = an.tail_table(lam.lam1, LAMBDA_THRESHOLDS, an.Scaling.T_LOGT)
    l2 = an.tail_table(lam.lam2, LAMBDA_THRESHOLDS, an.Scaling.T_LOGT)
    return h, l1, l2


def _h_tail_criterion(n: int, model: str, report):
    a = _tails(model, TAIL_MARGIN)[0]
    b = _tails(model, 2 * TAIL_MARGIN)[0]
    col = a.scaled
    diff = np.abs(a.survival - b.survival)
    tol = a.widths + b.widths
    ok_band = an.within_band(col, BAND)
    ok_margin = bool(np.all(diff < tol))
    ok_n = a.totals.min() >= 10**5
    ok = ok_band and ok_margin and ok_n
    report(n, ok, f"{model} {a.scaling.value} column {np.round(col, 4).tolist()} "
                  f"(max/min {col.max() / col.min():.3f}, {int(a.totals[0])} samples); "
                  f"margin {TAIL_MARGIN}->{2 * TAIL_MARGIN} |dP| {np.array2string(diff, precision=6)} "
                  f"vs widths {np.array2string(tol, precision=6)}")
    assert ok


def test_c04_straight_height_tail(report):
    _h_tail_criterion(4, "STRAIGHT", report)


def test_c05_diagonal_height_tail(report):
    _h_tail_criterion(5, "DIAGONAL", report)


def test_c06_lambda_tail(report):
    _, l1, l2 = _tails("DIAGONAL", TAIL_MARGIN)
    ok = an.within_band(l1.scaled, BAND) and an.within_band(l2.scaled, BAND)
    report(6, ok, f"DIAGONAL t/ln t column lambda1 {np.round(l1.scaled, 3).tolist()} "
                  f"(max/min {l1.scaled.max() / l1.scaled.min():.3f}), lambda2 "
                  f"{np.round(l2.scaled, 3).tolist()} (max/min {l2.scaled.max() / l2.scaled.min():.3f})")
    _tails.cache_clear()
    assert ok


# ---------------------------------------------------------------- 7

MOMENT_SIDES = (2048, 4096, 8192, 16384)
MOMENT_SEEDS = tuple(range(1, 21))


def test_c07_log_moment_dichotomy(report):
    """Region of side N, heights certified up to K = N/2 (sites of depth
    > K), estimator ``E[(min(h, K) + 1) ** (alpha A)]``, pooled over seeds.
    The nested regions share one row-swept build per seed."""
    cp = ConductanceParams(1.25, 0.7)
    side = MOMENT_SIDES[-1]
    squares = [(N // 2 + 1, N, N // 2) for N in MOMENT_SIDES]
    tails = {N: [] for N in MOMENT_SIDES}
    for seed in MOMENT_SEEDS:
        counts, _, _ = straight_height_counts(default_params("STRAIGHT", seed=seed),
                                              Box((0, 0), side, side, 1024), squares)
        for N, c in zip(MOMENT_SIDES, counts):
            tails[N].append(survival_from_counts(c))
    low, high = [], []
    for N in MOMENT_SIDES:
        tail = np.mean(tails[N], axis=0)  # equal sample sizes per seed
        low.append(log_moment_from_height_tail(tail, cp.A, cp.alpha_bar)[0])
        high.append(log_moment_from_height_tail(tail, cp.A, 1.0)[0])
    drift = np.abs(np.diff(low)) / np.array(low[:-1])
    growth = np.diff(high) / np.array(high[:-1])
    ok = bool(np.all(drift < 0.10) and np.all(growth > 0.15))
    report(7, ok, f"sides {list(MOMENT_SIDES)}, {len(MOMENT_SEEDS)} seeds: alpha=0.7 moment "
                  f"{np.round(low, 4).tolist()} drift {np.round(drift, 4).tolist()}; alpha=1 series "
                  f"{np.round(high, 3).tolist()} growth {np.round(growth, 4).tolist()}")
    assert ok


# ---------------------------------------------------------------- 8, 9, 10

def _stream_walk(model: str, seed: int, steps: int):
    env = StreamingTreeEnvironment(default_params(model, seed=seed), ConductanceParams(),
                                   StreamSettings(band_width=64))
    return run_walk(env, None, WalkConfig((0, 0), steps, seed=seed))


@pytest.fixture(scope="module")
def diagonal_walks():
    return [_stream_walk("DIAGONAL", s, 10**6) for s in SEEDS20]


def test_c08_follow_the_tree(report, diagonal_walks):
    bound = follow_tree_lower_bound(1.25, 50)
    fr = np.array([t.follow_fraction_tail for t in diagonal_walks])
    share = float(np.mean(fr >= 0.99))
    full = all(t.final_n == 10**6 and not t.exited for t in diagonal_walks)
    ok = bound > 0 and share >= 0.70 and full
    report(8, ok, f"bound(A=1.25, K=50) = {bound:.4e}; follow fraction over last 10% >= 0.99 in "
                  f"{share:.0%} of 20 walks (values {np.round(fr, 4).tolist()})")
    assert ok


def test_c09_diagonal_speed(report, diagonal_walks):
    reps = [an.speed_report(t) for t in diagonal_walks]
    sd = np.array([r.final_s_diag for r in reps])
    sa = np.array([abs(r.final_s_anti) for r in reps])
    slopes = np.array([an.trend_slope(r.n[r.post], np.abs(r.s_anti[r.post])) for r in reps])
    share = float(np.mean(slopes <= 0))
    ok = np.median(sd) >= 0.9 and np.median(sa) <= 0.2 and share > 0.5
    report(9, ok, f"median s_diag {np.median(sd):.4f}, median |s_anti| {np.median(sa):.4f}, "
                  f"|s_anti| trend non-increasing in {share:.0%} of runs")
    assert ok


def test_c10_straight_oscillation(report):
    reps = [an.speed_report(_stream_walk("STRAIGHT", s, 10**7)) for s in SEEDS20]
    osc = an.oscillation_test(reps, 0.1, 0.5)
    strong = np.array([r.s_diag[r.post].min() >= 0.9 for r in reps])
    ranges = np.array(osc.ranges)
    share = float(np.mean((ranges > 0.1) & strong))
    v = np.array([r.final_v for r in reps])
    spread = float(np.max(v.max(axis=0) - v.min(axis=0)))
    ok = share >= 0.5 and spread > 0.1
    report(10, ok, f"post-burn-in s_anti range > 0.1 with s_diag >= 0.9 in {share:.0%} of 20 walks "
                   f"(ranges {np.round(ranges, 3).tolist()}); inter-seed final v range {spread:.4f}")
    assert ok


# ---------------------------------------------------------------- 11

def test_c11_iid_speed_zero(report):
    reps = []
    for s in SEEDS20:
        t = run_walk(IidLogField(IidLogParams(2.0, s)), None, WalkConfig((0, 0), 10**6, seed=s))
        reps.append(an.speed_report(t))
    final = np.array([an.sup_speed(r)[-1] for r in reps])
    share = float(np.mean(final < 0.05))
    mean_series = np.mean([an.sup_speed(r) for r in reps], axis=0)
    n = reps[0].n
    slope = an.trend_slope(n, mean_series)
    ok = share >= 0.9 and slope < 0
    report(11, ok, f"final |X_n|_inf/n < 0.05 in {share:.0%} of 20 runs (median {np.median(final):.4f}); "
                   f"trend slope of the mean checkpoint series {slope:.4g}")
    assert ok


# ---------------------------------------------------------------- 12

CLI_CONFIG = """model = {model}
seeds = 3, 1, 2
width = 96
height = 96
margin = 128
steps = 4000
walk_env = {env}
thresholds = 4, 8, 16, 32
lambda_thresholds = 4, 8, 16
margins = 256
vc_kernels = 4
vc_n_max = 20
"""


def _cli_outputs(tmp_path, model, env, threads, tag):
    cfg = tmp_path / f"{model}_{env}.cfg"
    cfg.write_text(CLI_CONFIG.format(model=model, env=env))
    out = tmp_path / f"{model}_{env}_{tag}"
    for cmd in ("generate", "walk", "tails", "vc", "report"):
        if model == "IID" and cmd == "tails":
            continue
        code = cli_run([cmd, "--config", str(cfg), "--out", str(out), "--threads", str(threads)])
        assert code == 0, f"{cmd} exited {code}"
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "run.log"}


def test_c12_determinism(report, tmp_path):
    cases, differing, files = 0, [], 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for model in ("STRAIGHT", "DIAGONAL", "IID"):
            for env in ("box", "stream"):
                ref = _cli_outputs(tmp_path, model, env, 1, "a")
                for threads, tag in ((1, "b"), (3, "c")):
                    got = _cli_outputs(tmp_path, model, env, threads, tag)
                    cases += 1
                    if got != ref:
                        differing.append((model, env, threads))
                files += len(ref)
    ok = not differing
    report(12, ok, f"{cases} reruns (threads 1 and 3) of {files} output files: "
                   f"{'all byte-identical' if ok else differing}")
    assert ok
