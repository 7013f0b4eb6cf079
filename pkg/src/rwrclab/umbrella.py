"""Rasterization of a single umbrella onto the square lattice.

An umbrella anchored at ``y`` with intensity ``t`` has two sides.

STRAIGHT
    side 1 is the vertical segment ``y + k e2`` and side 2 the horizontal
    segment ``y + k e1``, ``k = 1..floor(t)``.  Sides are reported as the
    covered points.

DIAGONAL
    side 2 is the lower lattice staircase below the ray from ``y`` at angle
    ``phi = max(pi/4 - 1/ln t, 0)`` above the ``e1`` axis.  Column ``k`` has
    height ``h_k = floor(k tan(phi))``; the path runs along ``e1`` at height
    ``h_{k-1}`` from ``k-1`` to ``k`` and then climbs to ``h_k``.  Only the
    first ``max(2, ceil(t))`` edges are kept.  Side 1 is the mirror image
    under ``(a, b) -> (b, a)``.  Sides are reported as edges
    ``((x1, x2), axis)`` meaning ``[x, x + e_axis]``.

A vertical covered edge/point raises ``lambda_1`` and a horizontal one
raises ``lambda_2``.  The edges based at the anchor itself never count
when painting (see ``lattice.paint_lambda``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from numba import njit

from .errors import InvalidIntensityError
from .intensity import Model


@njit(cache=True, inline="always")
def stair_slope(t):
    """``tan(max(pi/4 - 1/ln t, 0))`` for ``t > 1``."""
    phi = math.pi / 4.0 - 1.0 / math.log(t)
    if phi < 0.0:
        phi = 0.0
    return math.tan(phi)


@njit(cache=True, inline="always")
def stair_edge_count(t):
    n = int(math.ceil(t))
    return n if n > 2 else 2


@njit(cache=True, inline="always")
def column_height(a, slope):
    if a < 0:
        return 0
    return int(math.floor(a * slope))


@njit(cache=True, inline="always")
def stair_point(m, slope):
    """Base point ``(a, b)`` of the ``m``-th staircase edge (``m >= 0``) and
    whether that edge is horizontal."""
    a = int((m + slope) / (1.0 + slope))
    if a > m:
        a = m
    while a > 0 and a + column_height(a - 1, slope) > m:
        a -= 1
    while a + 1 <= m and a + 1 + column_height(a, slope) <= m:
        a += 1
    b = m - a
    return a, b, b == column_height(a, slope)


@dataclass(frozen=True)
class UmbrellaRaster:
    anchor: tuple[int, int]
    intensity: float
    model: Model
    side1: tuple
    side2: tuple

    @property
    def prefix_edges(self) -> tuple:
        """The two forced edges ``[y, y+e1], [y+e1, y+2e1]`` of side 2."""
        y1, y2 = self.anchor
        return (((y1, y2), 1), ((y1 + 1, y2), 1))


def rasterize_umbrella(anchor, t: float, model: Model | str) -> UmbrellaRaster:
    """Lattice representation of the umbrella of intensity ``t`` at ``anchor``."""
    model = model if isinstance(model, Model) else Model(str(model).upper())
    if not (t > 1.0) or not math.isfinite(t):
        raise InvalidIntensityError(f"umbrella intensity must be finite and > 1, got {t!r}")
    y1, y2 = int(anchor[0]), int(anchor[1])
    if model is Model.STRAIGHT:
        n = int(math.floor(t))
        side1 = tuple((y1, y2 + k) for k in range(1, n + 1))
        side2 = tuple((y1 + k, y2) for k in range(1, n + 1))
        return UmbrellaRaster((y1, y2), float(t), model, side1, side2)

    slope = stair_slope(t)
    s1, s2 = [], []
    a = b = 0
    for _ in range(stair_edge_count(t)):
        horizontal = b == column_height(a, slope)
        if horizontal:
            s2.append(((y1 + a, y2 + b), 1))
            s1.append(((y1 + b, y2 + a), 2))
            a += 1
        else:
            s2.append(((y1 + a, y2 + b), 2))
            s1.append(((y1 + b, y2 + a), 1))
            b += 1
    return UmbrellaRaster((y1, y2), float(t), model, tuple(s1), tuple(s2))
