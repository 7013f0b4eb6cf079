"""Experiment configuration.

Grammar (one flat document)::

    # comment            (everything after '#' is ignored)
    key = value
    key = a, b, c        lists, or [a, b, c]

Keys are the field names of :class:`ExperimentConfig`.  Unknown keys and
malformed values are errors.  ``format_config`` writes every field, so
``parse_config(format_config(c)) == c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .conductance import ConductanceParams, IidLogParams
from .errors import ConfigError
from .intensity import DEFAULTS, Box, IntensityParams, Model
from .stream import StreamSettings

MODELS = ("STRAIGHT", "DIAGONAL", "IID")
WALK_ENVS = ("box", "stream")
FORMATS = ("csv", "json")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    seeds: tuple[int, ...]
    theta: float | None = None
    n0: int | None = None
    A: float = 1.25
    alpha_bar: float = 0.7
    beta: float = 2.0
    origin: tuple[int, int] = (0, 0)
    width: int = 512
    height: int = 512
    margin: int = 1024
    margins: tuple[int, ...] = ()
    steps: int = 10000
    gamma: float = 1.2
    checkpoints: tuple[int, ...] = ()
    start: tuple[int, int] | None = None
    walk_env: str = "box"
    band_width: int = 64
    near_reach: int = 32
    thresholds: tuple[float, ...] = (32, 64, 128, 256, 512)
    lambda_thresholds: tuple[float, ...] = (16, 32, 64, 128, 256, 512)
    burn_in: float = 0.1
    delta: float = 0.1
    osc_threshold: float = 0.5
    vc_kernels: int = 100
    vc_width: int = 5
    vc_height: int = 5
    vc_logw_max: float = 3.0
    vc_n_max: int = 50
    vc_bound_multiplier: float = 1.0
    out: str = "out"
    formats: tuple[str, ...] = FORMATS

    def __post_init__(self):
        _validate(self)

    @property
    def is_iid(self) -> bool:
        return self.model == "IID"

    def intensity_params(self, seed: int) -> IntensityParams:
        if self.is_iid:
            raise ConfigError("IID configs have no umbrella intensity law")
        return IntensityParams(Model(self.model), float(self.theta), int(self.n0), int(seed))

    def conductance_params(self) -> ConductanceParams:
        return ConductanceParams(self.A, self.alpha_bar)

    def iid_params(self, seed: int) -> IidLogParams:
        return IidLogParams(self.beta, int(seed))

    def box(self, margin: int | None = None) -> Box:
        return Box(self.origin, self.width, self.height, self.margin if margin is None else margin)

    def stream_settings(self) -> StreamSettings:
        return StreamSettings(band_width=self.band_width, near_reach=self.near_reach)

    def walk_start(self) -> tuple[int, int]:
        """Configured start, else ``origin + (width/8, height/8)``."""
        if self.start is not None:
            return self.start
        return (self.origin[0] + self.width // 8, self.origin[1] + self.height // 8)

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return replace(self, seeds=tuple(int(s) for s in seeds))


def _validate(c: ExperimentConfig) -> None:
    if c.model not in MODELS:
        raise ConfigError(f"model must be one of {', '.join(MODELS)}, got {c.model!r}")
    if not c.seeds:
        raise ConfigError("at least one seed is required")
    if c.is_iid:
        if c.theta is not None or c.n0 is not None:
            raise ConfigError("theta and n0 do not apply to the IID model")
        IidLogParams(c.beta)
    else:
        if c.theta is None or c.n0 is None:
            raise ConfigError("theta and n0 must be resolved for tree models")
        IntensityParams(Model(c.model), float(c.theta), int(c.n0), 0)
        ConductanceParams(c.A, c.alpha_bar)
    Box(c.origin, c.width, c.height, c.margin)
    for m in c.margins:
        if m < 0:
            raise ConfigError(f"margins must be >= 0, got {m}")
    if c.steps < 1:
        raise ConfigError(f"steps must be >= 1, got {c.steps}")
    if not c.gamma > 1:
        raise ConfigError(f"requires gamma > 1, got gamma={c.gamma}")
    if any(k < 1 for k in c.checkpoints):
        raise ConfigError("checkpoints must be >= 1")
    if c.walk_env not in WALK_ENVS:
        raise ConfigError(f"walk_env must be one of {', '.join(WALK_ENVS)}, got {c.walk_env!r}")
    StreamSettings(band_width=c.band_width, near_reach=c.near_reach)
    for name in ("thresholds", "lambda_thresholds"):
        t = getattr(c, name)
        if not t or any(b <= a for a, b in zip(t, t[1:])):
            raise ConfigError(f"{name} must be a non-empty increasing list")
    if not 0 <= c.burn_in < 1:
        raise ConfigError(f"burn_in must be in [0, 1), got {c.burn_in}")
    if not c.delta > 0:
        raise ConfigError("delta must be > 0")
    if not 0 < c.osc_threshold <= 1:
        raise ConfigError("osc_threshold must be in (0, 1]")
    if c.vc_kernels < 1 or c.vc_n_max < 1:
        raise ConfigError("vc_kernels and vc_n_max must be >= 1")
    if c.vc_width * c.vc_height > 400 or c.vc_width * c.vc_height < 2 or min(c.vc_width, c.vc_height) < 1:
        raise ConfigError("vc graph must have between 2 and 400 states")
    if not 0 <= c.vc_logw_max <= 200:
        raise ConfigError("vc_logw_max must be in [0, 200]")
    if not c.vc_bound_multiplier > 0:
        raise ConfigError("vc_bound_multiplier must be > 0")
    if not c.formats or any(f not in FORMATS for f in c.formats):
        raise ConfigError(f"formats must be drawn from {', '.join(FORMATS)}")


# ---------------------------------------------------------------- parsing

_KIND = {
    "model": "str", "seeds": "ints", "theta": "float?", "n0": "int?", "A": "float",
    "alpha_bar": "float", "beta": "float", "origin": "pair", "width": "int", "height": "int",
    "margin": "int", "margins": "ints", "steps": "int", "gamma": "float", "checkpoints": "ints",
    "start": "pair?", "walk_env": "str", "band_width": "int", "near_reach": "int",
    "thresholds": "floats", "lambda_thresholds": "floats", "burn_in": "float", "delta": "float",
    "osc_threshold": "float", "vc_kernels": "int", "vc_width": "int", "vc_height": "int",
    "vc_logw_max": "float", "vc_n_max": "int", "vc_bound_multiplier": "float", "out": "str",
    "formats": "strs",
}


def _items(v: str) -> list[str]:
    v = v.strip()
    if v.startswith("["):
        if not v.endswith("]"):
            raise ValueError("unterminated list")
        v = v[1:-1]
    return [x.strip() for x in v.split(",") if x.strip()]


def _int(s: str) -> int:
    f = float(s)
    if not f.is_integer():
        raise ValueError(f"{s!r} is not an integer")
    return int(s) if s.lstrip("+-").isdigit() else int(f)


def _float(s: str) -> float:
    f = float(s)
    if not math.isfinite(f):
        raise ValueError(f"{s!r} is not finite")
    return f


def _num(s: str):
    f = _float(s)
    return int(f) if f.is_integer() else f


def _value(kind: str, raw: str):
    opt = kind.endswith("?")
    kind = kind.rstrip("?")
    if opt and raw.strip().lower() in ("", "none"):
        return None
    if kind == "str":
        return raw.strip()
    if kind == "int":
        return _int(raw.strip())
    if kind == "float":
        return _float(raw.strip())
    items = _items(raw)
    if kind == "ints":
        return tuple(_int(x) for x in items)
    if kind == "floats":
        return tuple(_num(x) for x in items)
    if kind == "strs":
        return tuple(x.lower() for x in items)
    if kind == "pair":
        if len(items) != 2:
            raise ValueError("expected two integers")
        return (_int(items[0]), _int(items[1]))
    raise AssertionError(kind)


def parse_config(text: str) -> ExperimentConfig:
    kv: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (x.strip() for x in line.split("=", 1))
        if key not in _KIND:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in kv:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            kv[key] = _value(_KIND[key], raw)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from None
    if "model" not in kv:
        raise ConfigError("missing required key 'model'")
    kv["model"] = str(kv["model"]).upper()
    if "walk_env" in kv:
        kv["walk_env"] = kv["walk_env"].lower()
    if "seeds" not in kv:
        raise ConfigError("missing required key 'seeds'")
    if kv["model"] in ("STRAIGHT", "DIAGONAL"):
        theta, n0 = DEFAULTS[Model(kv["model"])]
        kv.setdefault("theta", theta)
        kv.setdefault("n0", n0)
        if kv["theta"] is None or kv["n0"] is None:
            raise ConfigError("theta and n0 cannot be empty for tree models")
        kv["theta"] = float(kv["theta"])
        kv["n0"] = int(kv["n0"])
    return ExperimentConfig(**kv)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(c: ExperimentConfig) -> str:
    lines = []
    for f in fields(c):
        v = getattr(c, f.name)
        if v is None and f.name in ("theta", "n0") and c.is_iid:
            continue
        lines.append(f"{f.name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
