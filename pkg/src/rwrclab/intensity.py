"""Heavy-tailed umbrella intensities.

Each lattice site ``x`` carries an intensity ``L(x) > 1`` drawn i.i.d. from
one of two laws, parametrized by their survival function ``S(t) = P(L > t)``:

* STRAIGHT:  ``S(t) = theta / t**2`` for ``t >= n0``
* DIAGONAL:  ``S(t) = theta * log(t) / t**2`` for ``t >= n0``

Below the cutoff ``n0`` the law is uniform on ``(1, n0]`` and carries the
remaining mass ``1 - p0``.  Sampling is by inverse survival,
``L = S^{-1}(u)`` with ``u`` a hashed uniform, so ``u = p0`` maps to ``n0``
and smaller ``u`` maps to larger intensities.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._hash import TAG_INTENSITY, as_seed, uniform4
from .errors import ConfigError, DomainError, NumericError

STRAIGHT_ID = 0
DIAGONAL_ID = 1


class Model(enum.Enum):
    STRAIGHT = "STRAIGHT"
    DIAGONAL = "DIAGONAL"

    @property
    def code(self) -> int:
        return STRAIGHT_ID if self is Model.STRAIGHT else DIAGONAL_ID


@dataclass(frozen=True)
class IntensityParams:
    """Law of the umbrella intensities plus the environment seed."""

    model: Model
    theta: float
    n0: int
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.model, Model):
            object.__setattr__(self, "model", Model(str(self.model).upper()))
        validate_intensity(self.model, self.theta, self.n0)

    @property
    def p0(self) -> float:
        """Mass of the tail part, ``S(n0)``."""
        return cutoff_mass(self.model, self.theta, self.n0)

    @property
    def useed(self) -> np.uint64:
        return as_seed(self.seed)

    def survival(self, t):
        return survival(self, t)


DEFAULTS = {
    Model.STRAIGHT: (3.0, 2),
    Model.DIAGONAL: (10.0, 4),
}


def default_params(model: Model | str, seed: int = 0) -> IntensityParams:
    model = Model(str(model.value if isinstance(model, Model) else model).upper())
    theta, n0 = DEFAULTS[model]
    return IntensityParams(model, theta, n0, seed)


def cutoff_mass(model: Model, theta: float, n0: float) -> float:
    if model is Model.STRAIGHT:
        return theta / n0**2
    return theta * math.log(n0) / n0**2


def validate_intensity(model: Model, theta: float, n0: int) -> None:
    if not (isinstance(n0, (int, np.integer)) and n0 >= 2):
        raise ConfigError(f"n0 must be an integer >= 2, got {n0!r}")
    if not math.isfinite(theta):
        raise ConfigError(f"theta must be finite, got {theta!r}")
    if model is Model.STRAIGHT:
        if not (2.0 * math.sqrt(2.0) <= theta <= n0**2):
            raise ConfigError(
                f"STRAIGHT requires 2*sqrt(2) <= theta <= n0^2, got theta={theta}, n0={n0}"
            )
    else:
        if not (10.0 <= theta <= n0**2):
            raise ConfigError(
                f"DIAGONAL requires 10 <= theta <= n0^2, got theta={theta}, n0={n0}"
            )
        if theta * math.log(n0) / n0**2 > 1.0:
            raise ConfigError(
                f"DIAGONAL requires theta*ln(n0)/n0^2 <= 1 so the tail mass is a "
                f"probability, got {theta * math.log(n0) / n0**2:.4f}"
            )


def survival(params: IntensityParams, t):
    """``P(L > t)`` evaluated elementwise."""
    t = np.asarray(t, dtype=float)
    theta, n0, p0 = params.theta, float(params.n0), params.p0
    with np.errstate(divide="ignore", invalid="ignore"):
        if params.model is Model.STRAIGHT:
            tail = theta / t**2
        else:
            tail = theta * np.log(t) / t**2
        body = 1.0 - (1.0 - p0) * (t - 1.0) / (n0 - 1.0)
    out = np.where(t >= n0, tail, np.where(t > 1.0, body, 1.0))
    return out if out.ndim else float(out)


def invert_survival_diagonal(u: float, theta: float, n0: float) -> float:
    """Solve ``theta * ln(t) / t**2 = u`` for ``t >= n0`` by bisection.

    Bracketed bisection to relative tolerance 1e-12.  This is the reference
    inverse; the compiled field uses a safeguarded Newton iteration that
    agrees with it to that tolerance.

    Raises
    ------
    NumericError
        If the bracket cannot be established or the iteration does not
        converge.
    """
    p0 = theta * math.log(n0) / n0**2
    if not (0.0 < u <= p0):
        raise DomainError(f"u must lie in (0, p0={p0:.6g}], got {u!r}")
    if u == p0:
        return float(n0)

    def s(t):
        return theta * math.log(t) / (t * t)

    lo, hi = float(n0), 2.0 * n0
    for _ in range(2100):
        if s(hi) < u:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericError(f"no bracket for u={u!r}")
    if not math.isfinite(hi):
        raise NumericError(f"bracket overflow for u={u!r}")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if s(mid) > u:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * lo:
            return 0.5 * (lo + hi)
    raise NumericError(f"bisection did not converge for u={u!r}")


@njit(cache=True)
def _diag_tail_inverse(u, theta, n0):
    # Newton on f(w) = ln(theta) + ln(w) - 2w - ln(u), w = ln(t).  f is
    # concave and decreasing for w > 1/2, and the start lies right of the
    # root (ln w <= w - 1), so the iterates decrease monotonically.
    lt = math.log(theta)
    lu = math.log(u)
    wmin = math.log(n0)
    w = lt - 1.0 - lu
    if w < wmin:
        w = wmin
    for _ in range(200):
        f = lt + math.log(w) - 2.0 * w - lu
        step = f / (1.0 / w - 2.0)
        wn = w - step
        if wn < wmin:
            wn = wmin
        if abs(wn - w) <= 1e-15 * w:
            return math.exp(wn)
        w = wn
    raise ArithmeticError("diagonal survival inversion did not converge")


@njit(cache=True)
def inverse_survival(u, model, theta, n0, p0):
    """``S^{-1}(u)`` for both laws (compiled, scalar)."""
    if u >= p0:
        return 1.0 + (n0 - 1.0) * (1.0 - u) / (1.0 - p0)
    if model == 0:
        return math.sqrt(theta / u)
    return _diag_tail_inverse(u, theta, n0)


@njit(cache=True)
def intensity_at(seed, model, theta, n0, p0, x1, x2):
    return inverse_survival(uniform4(seed, TAG_INTENSITY, x1, x2), model, theta, n0, p0)


@njit(cache=True)
def _intensity_block(seed, model, theta, n0, p0, x1lo, x2lo, w, h):
    out = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            out[r, c] = intensity_at(seed, model, theta, n0, p0, x1lo + c, x2lo + r)
    return out


def kernel_args(params: IntensityParams):
    return (params.useed, params.model.code, float(params.theta), float(params.n0), params.p0)


def site_intensity(params: IntensityParams, x) -> float:
    """Intensity ``L(x)``: a pure function of ``(seed, x)``."""
    return float(intensity_at(*kernel_args(params), int(x[0]), int(x[1])))


def intensity_from_uniform(params: IntensityParams, u: float) -> float:
    """Inverse survival ``S^{-1}(u)`` for ``u`` in (0, 1)."""
    if not (0.0 < u < 1.0):
        raise DomainError(f"u must lie in (0, 1), got {u!r}")
    _, code, theta, n0, p0 = kernel_args(params)
    return float(inverse_survival(float(u), code, theta, n0, p0))


@dataclass(frozen=True)
class Box:
    """Inner box ``[ox, ox+width) x [oy, oy+height)`` plus a generation margin.

    Arrays over the box are indexed ``[x2 - oy, x1 - ox]`` (row-major by
    second coordinate).
    """

    origin: tuple[int, int]
    width: int
    height: int
    margin: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"box width and height must be >= 1, got {self.width}x{self.height}")
        if self.margin < 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def contains(self, x) -> bool:
        ox, oy = self.origin
        return ox <= x[0] < ox + self.width and oy <= x[1] < oy + self.height

    def index(self, x) -> tuple[int, int]:
        if not self.contains(x):
            raise DomainError(f"{tuple(x)} is outside the box")
        return (x[1] - self.origin[1], x[0] - self.origin[0])

    def with_margin(self, margin: int) -> "Box":
        return Box(self.origin, self.width, self.height, margin)

    def depth(self) -> np.ndarray:
        """``min(x1 - ox, x2 - oy)`` for every box site."""
        r = np.arange(self.height)[:, None]
        c = np.arange(self.width)[None, :]
        return np.minimum(r, c)


@dataclass(frozen=True)
class IntensityField:
    """Lazily realized intensities over a box's generation region."""

    params: IntensityParams
    box: Box

    def at(self, x) -> float:
        ox, oy = self.box.origin
        m = self.box.margin
        if not (ox - m <= x[0] < ox + self.box.width + m and oy - m <= x[1] < oy + self.box.height + m):
            raise DomainError(f"{tuple(x)} is outside the generation region")
        return site_intensity(self.params, x)

    def values(self) -> np.ndarray:
        """All intensities over the generation region, indexed like the box
        but shifted by the margin."""
        ox, oy = self.box.origin
        m = self.box.margin
        return _intensity_block(
            *kernel_args(self.params), ox - m, oy - m, self.box.width + 2 * m, self.box.height + 2 * m
        )
