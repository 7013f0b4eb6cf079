"""Command line harness: ``rwrclab {generate,walk,tails,vc,report}``.

Every command is a pure function of the config and seeds.  Per-seed work
may run on several threads; results are collected in seed order and
written by the main thread, so outputs do not depend on ``--threads``.
Wall-clock information only goes to ``run.log`` in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis as an
from .conductance import IidLogField, conductances_from_heights, iid_log_pareto, marginal_log_moments
from .config import ExperimentConfig, format_config, load_config
from .errors import ConfigError, FormatError, RwrcError
from .lattice import build_forest, count_cycles
from .snapshot import MODEL_IID, read_conductance, read_environment, write_conductance, write_environment
from .stream import StreamingTreeEnvironment
from .walker import WalkConfig, run_walk, write_trajectory_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
EARLY_EXIT_STEPS = 100


def fingerprint(cfg: ExperimentConfig) -> str:
    """Short hash of the parameters (seeds and output settings excluded)."""
    skip = ("seeds", "out", "formats")
    text = "".join(line + "\n" for line in format_config(cfg).splitlines()
                   if line.split(" = ", 1)[0] not in skip)
    return hashlib.sha256(text.encode()).hexdigest()[:10]


def _model_code(cfg: ExperimentConfig) -> int:
    return MODEL_IID if cfg.is_iid else (0 if cfg.model == "STRAIGHT" else 1)


def _header_params(cfg: ExperimentConfig):
    if cfg.is_iid:
        return MODEL_IID, cfg.beta, 0
    return _model_code(cfg), float(cfg.theta), int(cfg.n0)


def _stem(kind: str, cfg: ExperimentConfig, seed: int) -> str:
    return f"{kind}_{cfg.model.lower()}_s{seed}_{fingerprint(cfg)}"


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _map_seeds(fn, cfg: ExperimentConfig, threads: int):
    seeds = list(cfg.seeds)
    if threads <= 1 or len(seeds) == 1:
        return [fn(cfg, s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda s: fn(cfg, s), seeds))


# ---------------------------------------------------------------- generate

def _build_tree(cfg: ExperimentConfig, seed: int, margin: int | None = None):
    return build_forest(cfg.intensity_params(seed), cfg.box(margin))


def generate_one(cfg: ExperimentConfig, seed: int) -> dict:
    out = Path(cfg.out)
    model, theta, n0 = _header_params(cfg)
    box = cfg.box()
    stem_c = _stem("cond", cfg, seed)
    if cfg.is_iid:
        cf = iid_log_pareto(box, cfg.iid_params(seed))
        write_conductance(out / f"{stem_c}.bin", model, theta, n0, seed, cf)
        return {"seed": seed, "conductance": f"{stem_c}.bin", "max_logw": float(cf.edge_values().max(initial=0.0))}
    lam, anc, hf = _build_tree(cfg, seed)
    cf = conductances_from_heights(hf, anc, cfg.conductance_params())
    stem_e = _stem("env", cfg, seed)
    write_environment(out / f"{stem_e}.bin", model, theta, n0, seed, hf, anc)
    write_conductance(out / f"{stem_c}.bin", model, theta, n0, seed, cf)
    return {
        "seed": seed,
        "environment": f"{stem_e}.bin",
        "conductance": f"{stem_c}.bin",
        "max_h": int(hf.h.max()),
        "exact_fraction": float(hf.exact.mean()),
        "tiebreak_count": int(anc.tiebreak_count),
        "cycles": int(count_cycles(anc)),
    }


def cmd_generate(cfg: ExperimentConfig, threads: int = 1) -> dict:
    res = _map_seeds(generate_one, cfg, threads)
    summary = {"command": "generate", "model": cfg.model, "fingerprint": fingerprint(cfg), "seeds": res}
    if "json" in cfg.formats:
        write_json(Path(cfg.out) / f"generate_{cfg.model.lower()}_{fingerprint(cfg)}.json", summary)
    for r in res:
        if cfg.is_iid:
            print(f"seed {r['seed']}: max logw {r['max_logw']:.4g}")
        else:
            print(f"seed {r['seed']}: max h {r['max_h']}, exact fraction {r['exact_fraction']:.4f}, "
                  f"ties {r['tiebreak_count']}")
    return summary


# ---------------------------------------------------------------- walk

def _box_environment(cfg: ExperimentConfig, seed: int):
    """Conductance and ancestral fields for a box walk: read from the
    snapshots of ``generate`` when present, else built in memory."""
    out = Path(cfg.out)
    pc = out / f"{_stem('cond', cfg, seed)}.bin"
    pe = out / f"{_stem('env', cfg, seed)}.bin"
    if pc.exists() and (cfg.is_iid or pe.exists()):
        hdr, cf = read_conductance(pc)
        if hdr.seed != seed or hdr.model != _model_code(cfg) or hdr.box != cfg.box():
            raise FormatError(f"{pc}: snapshot does not match the config")
        anc = None
        if not cfg.is_iid:
            _, _, anc = read_environment(pe)
        return cf, anc, "snapshot"
    if cfg.is_iid:
        return iid_log_pareto(cfg.box(), cfg.iid_params(seed)), None, "generated"
    lam, anc, hf = _build_tree(cfg, seed)
    return conductances_from_heights(hf, anc, cfg.conductance_params()), anc, "generated"


def walk_one(cfg: ExperimentConfig, seed: int):
    wc = WalkConfig(cfg.walk_start(), cfg.steps, seed, cfg.gamma, cfg.checkpoints)
    if cfg.is_iid and cfg.walk_env == "stream":
        field, anc, source = IidLogField(cfg.iid_params(seed)), None, "lattice"
    elif cfg.walk_env == "stream":
        field = StreamingTreeEnvironment(cfg.intensity_params(seed), cfg.conductance_params(),
                                         cfg.stream_settings())
        anc, source = None, "stream"
    else:
        field, anc, source = _box_environment(cfg, seed)
    traj = run_walk(field, anc, wc)
    return traj, source


def walk_summary(cfg: ExperimentConfig, seed: int, traj, source: str) -> dict:
    d = {
        "seed": seed,
        "environment": source,
        "start": list(traj.config.start),
        "final_n": traj.final_n,
        "final": list(traj.final),
        "exited": traj.exited,
        "early_exit_warning": bool(traj.exited and traj.final_n < EARLY_EXIT_STEPS),
        "follow_fraction_tail": traj.follow_fraction_tail,
    }
    n = traj.final_n
    dx1, dx2 = traj.final[0] - traj.config.start[0], traj.final[1] - traj.config.start[1]
    d["final_v"] = [dx1 / n, dx2 / n]
    d["final_s_diag"] = (dx1 + dx2) / n
    d["final_s_anti"] = (dx2 - dx1) / n
    d["final_sup_speed"] = max(abs(dx1), abs(dx2)) / n
    try:
        rep = an.speed_report(_displacement(traj), cfg.burn_in)
    except RwrcError as e:
        d["speed"] = None
        d["speed_error"] = str(e)
        return d
    post = rep.post
    d["speed"] = {
        "n": rep.n, "s_diag": rep.s_diag, "s_anti": rep.s_anti,
        "sup_speed": an.sup_speed(rep),
        "anti_min": rep.anti_min, "anti_max": rep.anti_max, "anti_range": rep.anti_range,
        "burn_in_step": rep.burn_in_step,
        "abs_anti_slope": an.trend_slope(rep.n[post], np.abs(rep.s_anti[post])),
        "sup_speed_slope": an.trend_slope(rep.n[post], an.sup_speed(rep)[post]),
    }
    return d


def _displacement(traj):
    """Trajectory shifted so that the walk starts at the origin."""
    s1, s2 = traj.config.start
    return replace(traj, x1=traj.x1 - s1, x2=traj.x2 - s2, final=(traj.final[0] - s1, traj.final[1] - s2))


def cmd_walk(cfg: ExperimentConfig, threads: int = 1) -> dict:
    res = _map_seeds(walk_one, cfg, threads)
    out = Path(cfg.out)
    per = []
    reports = []
    for seed, (traj, source) in zip(cfg.seeds, res):
        if "csv" in cfg.formats:
            write_trajectory_csv(out / f"{_stem('traj', cfg, seed)}.csv", traj)
        s = walk_summary(cfg, seed, traj, source)
        per.append(s)
        if s["early_exit_warning"]:
            print(f"warning: seed {seed} left the box after {traj.final_n} steps", file=sys.stderr)
        if s["speed"] is not None:
            reports.append(an.speed_report(_displacement(traj), cfg.burn_in))
    summary = {"command": "walk", "model": cfg.model, "fingerprint": fingerprint(cfg), "walks": per}
    if reports and not cfg.is_iid:
        osc = an.oscillation_test(reports, cfg.delta, cfg.osc_threshold)
        summary["oscillation"] = {"passed": osc.passed, "fraction": osc.fraction, "ranges": osc.ranges,
                                  "delta": osc.delta, "threshold": osc.threshold}
    if per:
        summary["median_final_s_diag"] = float(np.median([p["final_s_diag"] for p in per]))
        summary["median_abs_final_s_anti"] = float(np.median([abs(p["final_s_anti"]) for p in per]))
        summary["final_s_anti_range"] = float(np.ptp([p["final_s_anti"] for p in per]))
    if "json" in cfg.formats:
        write_json(out / f"walk_{cfg.model.lower()}_{fingerprint(cfg)}.json", summary)
    for p in per:
        print(f"seed {p['seed']}: n={p['final_n']} v=({p['final_v'][0]:.4f}, {p['final_v'][1]:.4f}) "
              f"s_diag={p['final_s_diag']:.4f} s_anti={p['final_s_anti']:.4f} exited={p['exited']}")
    return summary


# ---------------------------------------------------------------- tails

def h_scaling(cfg: ExperimentConfig) -> an.Scaling:
    return an.Scaling.N_LINEAR if cfg.model == "STRAIGHT" else an.Scaling.N_LOG2


def tails_one(cfg: ExperimentConfig, seed: int, margin: int | None = None) -> dict:
    lam, anc, hf = _build_tree(cfg, seed, margin)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        th = an.tail_table(hf.h, cfg.thresholds, h_scaling(cfg), depth=hf.depth)
    l1 = an.tail_table(lam.lam1, cfg.lambda_thresholds, an.Scaling.T_LOGT)
    l2 = an.tail_table(lam.lam2, cfg.lambda_thresholds, an.Scaling.T_LOGT)
    cp = cfg.conductance_params()
    mom = marginal_log_moments(hf, anc, cp, sorted({cp.alpha_bar, 1.0}))
    return {"h": th, "lambda1": l1, "lambda2": l2, "log_moments": mom}


def _table_json(t: an.TailTable) -> dict:
    v, lo, hi = t.column()
    return {"scaling": t.scaling.value, "thresholds": t.thresholds, "counts": t.counts, "totals": t.totals,
            "survival": t.survival, "lower": t.lower, "upper": t.upper, "scaled": v, "scaled_lower": lo,
            "scaled_upper": hi, "excluded": list(t.excluded)}


def cmd_tails(cfg: ExperimentConfig, threads: int = 1) -> dict:
    if cfg.is_iid:
        raise ConfigError("tails needs a tree model (STRAIGHT or DIAGONAL)")
    out = Path(cfg.out)
    res = _map_seeds(tails_one, cfg, threads)
    summary = {"command": "tails", "model": cfg.model, "fingerprint": fingerprint(cfg), "per_seed": {},
               "pooled": {}}
    for key in ("h", "lambda1", "lambda2"):
        tabs = [r[key] for r in res]
        if tabs[0].excluded:
            print(f"warning: {key} thresholds {list(tabs[0].excluded)} exceed the certification depth",
                  file=sys.stderr)
        pooled = an.pool_tables(tabs)
        summary["pooled"][key] = _table_json(pooled)
        for seed, t in zip(cfg.seeds, tabs):
            summary["per_seed"].setdefault(str(seed), {})[key] = _table_json(t)
            if "csv" in cfg.formats:
                write_csv(out / f"{_stem('tail_' + key, cfg, seed)}.csv", t.header, t.rows())
        if "csv" in cfg.formats:
            write_csv(out / f"tail_{key}_{cfg.model.lower()}_pooled_{fingerprint(cfg)}.csv", pooled.header,
                      pooled.rows())
    summary["log_moments"] = {str(seed): r["log_moments"] for seed, r in zip(cfg.seeds, res)}
    extra = [m for m in cfg.margins if m != cfg.margin]
    if extra:
        base = an.pool_tables([r["h"] for r in res])
        summary["margins"] = {}
        for m in extra:
            alt = an.pool_tables(_map_seeds(lambda c, s: tails_one(c, s, m)["h"], cfg, threads))
            d = np.abs(base.survival - alt.survival)
            summary["margins"][str(m)] = {
                "h": _table_json(alt),
                "abs_diff": d,
                "within_ci": bool(np.all(d <= base.widths + alt.widths)),
            }
    if "json" in cfg.formats:
        write_json(out / f"tails_{cfg.model.lower()}_{fingerprint(cfg)}.json", summary)
    pooled = summary["pooled"]["h"]
    cols = ", ".join(f"{t:g}:{v:.4g}" for t, v in zip(pooled["thresholds"], pooled["scaled"]))
    print(f"pooled h column ({pooled['scaling']}): {cols}")
    return summary


# ---------------------------------------------------------------- vc

def vc_one(cfg: ExperimentConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    ratios, viol = [], []
    for k in range(cfg.vc_kernels):
        f = an.random_kernel(rng, cfg.vc_width, cfg.vc_height, cfg.vc_logw_max)
        r = an.vc_check(f, cfg.vc_n_max, cfg.vc_bound_multiplier)
        ratios.append(r.max_ratio)
        viol.extend([k, *v] for v in r.violations[:5])
    return {"seed": seed, "kernels": cfg.vc_kernels, "max_ratio": max(ratios), "ratios": ratios,
            "violations": len(viol), "violation_samples": viol[:20]}


def cmd_vc(cfg: ExperimentConfig, threads: int = 1) -> dict:
    res = _map_seeds(vc_one, cfg, threads)
    summary = {"command": "vc", "fingerprint": fingerprint(cfg), "bound_multiplier": cfg.vc_bound_multiplier,
               "graph": [cfg.vc_width, cfg.vc_height], "n_max": cfg.vc_n_max, "per_seed": res,
               "violations": sum(r["violations"] for r in res),
               "max_ratio": max(r["max_ratio"] for r in res)}
    if "json" in cfg.formats:
        write_json(Path(cfg.out) / f"vc_{fingerprint(cfg)}.json", summary)
    print(f"vc: {sum(r['kernels'] for r in res)} kernels, {summary['violations']} violations, "
          f"max ratio {summary['max_ratio']:.6f}")
    return summary


# ---------------------------------------------------------------- report

def cmd_report(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Collect the JSON summaries in the output directory."""
    out = Path(cfg.out)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    items = {}
    for p in sorted(out.glob("*.json")):
        if p.name.startswith("report_"):
            continue
        with open(p, encoding="utf-8") as fh:
            try:
                items[p.name] = json.load(fh)
            except json.JSONDecodeError as e:
                raise FormatError(f"{p}: {e}") from None
    rows = []
    for name, d in items.items():
        cmd = d.get("command")
        if cmd == "walk":
            for w in d["walks"]:
                rows.append(["walk", d["model"], w["seed"], w["final_n"], w["final_s_diag"], w["final_s_anti"],
                             w["follow_fraction_tail"], w["exited"]])
        elif cmd == "vc":
            rows.append(["vc", "", "", d["violations"], d["max_ratio"], "", "", ""])
    summary = {"command": "report", "sources": sorted(items), "items": items}
    write_json(out / f"report_{fingerprint(cfg)}.json", summary)
    if "csv" in cfg.formats:
        write_csv(out / f"report_{fingerprint(cfg)}.csv",
                  ["kind", "model", "seed", "n", "s_diag_or_ratio", "s_anti", "follow_tail", "exited"], rows)
    for name in sorted(items):
        print(f"{name}: {items[name].get('command')}")
    return summary


COMMANDS = {"generate": cmd_generate, "walk": cmd_walk, "tails": cmd_tails, "vc": cmd_vc, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwrclab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--seed-override", type=int, default=None, help="run a single seed instead of the list")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads over seeds")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.time()
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        if args.seed_override is not None:
            cfg = cfg.with_seeds([args.seed_override])
        if args.out is not None:
            cfg = replace(cfg, out=args.out)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args.threads)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except (RwrcError, ArithmeticError) as e:
        print(f"numeric or invariant failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    with open(Path(cfg.out) / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {args.command} {args.config} "
                 f"threads={args.threads} seconds={time.time() - t0:.2f}\n")
    return EXIT_OK


def main() -> None:
    sys.exit(run())
