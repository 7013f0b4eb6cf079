import json
from pathlib import Path

import pytest

from rwrclab.cli import fingerprint, run
from rwrclab.config import parse_config

SMALL = """model = {model}
width = 64
height = 64
margin = 96
seeds = 1, 2
steps = {steps}
thresholds = 4, 8, 16
lambda_thresholds = 4, 8, 16
vc_kernels = 3
vc_n_max = 10
"""


def _cfg(tmp_path, model="DIAGONAL", steps=500, extra=""):
    p = tmp_path / f"{model.lower()}.cfg"
    p.write_text(SMALL.format(model=model, steps=steps) + extra)
    return p


def _outputs(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "run.log"}


COMMANDS = ["generate", "walk", "tails", "vc", "report"]


@pytest.mark.parametrize("model", ["STRAIGHT", "DIAGONAL", "IID"])
def test_pipeline_is_deterministic_across_threads(tmp_path, model, capsys):
    cfg = _cfg(tmp_path, model)
    runs = []
    for threads in (1, 2):
        out = tmp_path / f"out{threads}"
        for cmd in COMMANDS:
            if model == "IID" and cmd == "tails":
                continue
            assert run([cmd, "--config", str(cfg), "--out", str(out), "--threads", str(threads)]) == 0
        runs.append(_outputs(out))
    assert runs[0] == runs[1]
    names = set(runs[0])
    assert any(n.startswith("traj_") and n.endswith(".csv") for n in names)
    assert any(n.startswith("walk_") and n.endswith(".json") for n in names)
    assert (tmp_path / "out1" / "run.log").exists()


def test_stream_walks(tmp_path):
    cfg = _cfg(tmp_path, "DIAGONAL", 3000, "walk_env = stream\n")
    assert run(["walk", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    js = next((tmp_path / "o").glob("walk_*.json"))
    walks = json.loads(js.read_text())["walks"]
    assert [w["final_n"] for w in walks] == [3000, 3000]


def test_seed_override(tmp_path):
    cfg = _cfg(tmp_path, "STRAIGHT")
    assert run(["generate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed-override", "7"]) == 0
    names = [p.name for p in (tmp_path / "o").iterdir()]
    assert any("_s7_" in n for n in names) and not any("_s1_" in n for n in names)


def test_fingerprint_ignores_seeds_and_out():
    a = parse_config(SMALL.format(model="STRAIGHT", steps=10))
    b = parse_config(SMALL.format(model="STRAIGHT", steps=10) + "out = elsewhere\n").with_seeds([5])
    c = parse_config(SMALL.format(model="STRAIGHT", steps=11))
    assert fingerprint(a) == fingerprint(b) != fingerprint(c)


def test_config_errors_exit_2(tmp_path, capsys):
    assert run(["walk", "--config", str(_cfg(tmp_path, steps=0)), "--out", str(tmp_path / "o")]) == 2
    assert "steps" in capsys.readouterr().err
    assert run(["walk", "--config", str(_cfg(tmp_path)), "--out", str(tmp_path / "o"), "--threads", "0"]) == 2


def test_io_errors_exit_4(tmp_path, capsys):
    assert run(["walk", "--config", str(tmp_path / "missing.cfg")]) == 4
    cfg = _cfg(tmp_path, "STRAIGHT")
    out = tmp_path / "o"
    assert run(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    env = next(out.glob("env_*_s1_*.bin"))
    env.write_bytes(env.read_bytes()[:-3])
    assert run(["walk", "--config", str(cfg), "--out", str(out)]) == 4
    assert "i/o error" in capsys.readouterr().err


def test_uncertified_thresholds_exit_3(tmp_path, capsys):
    cfg = _cfg(tmp_path, "STRAIGHT", extra="").read_text().replace("thresholds = 4, 8, 16\nlambda", "thresholds = 100, 200\nlambda")
    p = tmp_path / "bad.cfg"
    p.write_text(cfg)
    assert run(["tails", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_early_exit_warning(tmp_path, capsys):
    p = tmp_path / "tiny.cfg"
    p.write_text("model = DIAGONAL\nwidth = 12\nheight = 12\nmargin = 64\nseeds = 1, 2\nsteps = 5000\n")
    assert run(["walk", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    js = json.loads(next((tmp_path / "o").glob("walk_*.json")).read_text())
    assert all(w["exited"] and w["final_n"] < 100 for w in js["walks"])
    assert all(w["early_exit_warning"] for w in js["walks"])
    assert "left the box" in capsys.readouterr().err
