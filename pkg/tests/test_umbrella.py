import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwrclab.errors import InvalidIntensityError
from rwrclab.intensity import Model
from rwrclab.umbrella import column_height, rasterize_umbrella, stair_edge_count, stair_point, stair_slope


def test_straight_sides():
    u = rasterize_umbrella((0, 0), 3.0, Model.STRAIGHT)
    assert set(u.side1) == {(0, 1), (0, 2), (0, 3)}
    assert set(u.side2) == {(1, 0), (2, 0), (3, 0)}


def test_straight_translation_and_floor():
    u = rasterize_umbrella((5, 5), 2.5, "straight")
    assert set(u.side2) == {(6, 5), (7, 5)}


def test_diagonal_staircase_heights():
    t = math.e**2
    slope = stair_slope(t)
    assert math.atan(slope) == pytest.approx(math.pi / 4 - 0.5)
    assert slope == pytest.approx(0.2936, abs=5e-4)
    assert [column_height(k, slope) for k in range(1, 8)] == [0, 0, 0, 1, 1, 1, 2]
    u = rasterize_umbrella((0, 0), t, Model.DIAGONAL)
    assert len(u.side2) == stair_edge_count(t) == 8
    # the lower side begins with the two forced horizontal edges
    assert u.side2[:2] == u.prefix_edges
    # the end of the path sits near the ideal segment endpoint (7.09, 2.08)
    (a, b), d = u.side2[-1]
    end = (a + (d == 1), b + (d == 2))
    assert abs(end[0] - 7.09) < 1.5 and abs(end[1] - 2.08) < 1.5


def test_diagonal_sides_mirror():
    u = rasterize_umbrella((2, -1), 40.0, Model.DIAGONAL)
    for ((a, b), d), ((c, e), f) in zip(u.side2, u.side1):
        assert (c - 2, e + 1) == (b + 1, a - 2)
        assert d != f


def test_small_slope_clamped():
    # for t <= e^(4/pi) the staircase is flat
    assert stair_slope(2.0) == 0.0
    assert stair_edge_count(1.5) == 2


@pytest.mark.parametrize("t", [1.0, 0.5, float("inf"), float("nan")])
def test_rejects_bad_intensity(t):
    with pytest.raises(InvalidIntensityError):
        rasterize_umbrella((0, 0), t, Model.STRAIGHT)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.01, 2e3))
def test_stair_point_matches_path(t):
    u = rasterize_umbrella((0, 0), t, Model.DIAGONAL)
    slope = stair_slope(t)
    for m in range(0, min(len(u.side2), 400)):
        a, b, hor = stair_point(m, slope)
        assert u.side2[m] == ((a, b), 1 if hor else 2)


@settings(max_examples=200, deadline=None)
@given(st.floats(2.0, 1e12), st.integers(0, 10**6))
def test_stair_point_is_on_staircase(t, m):
    slope = stair_slope(t)
    a, b, hor = stair_point(m, slope)
    assert a + b == m and a >= 0
    prev = column_height(a - 1, slope) if a else 0
    assert prev <= b <= column_height(a, slope)
    assert hor == (b == column_height(a, slope))
