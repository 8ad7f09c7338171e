"""Projective-conic machinery for minimizing a quadratic form on the unit circle.

Stationary points of ``r^T omega r`` on ``x^2 + y^2 = 1`` are the
intersections of the circle with the *derivative conic*. Rather than solving
a quartic, a degenerate member of the pencil spanned by the two conics is
found from a depressed monic cubic, split into two lines, and each line is
intersected with the circle.

Lines are homogeneous ``(a, b, c)`` arrays meaning ``a x + b y + c = 0``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import LineAtInfinity, NotDegenerate, ZeroConic

UNIT_CIRCLE = np.diag([1.0, 1.0, -1.0])

# adjugate entries below this * max|sigma|^2 count as zero (sigma has rank 1)
ADJUGATE_ZERO = 1e-10
# |1 - dist^2| below this is a tangency
TANGENT_TOL = 1e-12
# a^2 + b^2 below this * c^2 is the line at infinity
INFINITE_LINE = 1e-28


# --------------------------------------------------------------------------- kernels
#
# The hot kernels pass 3x3 matrices as row-major 9-tuples and lines as
# 3-tuples: small values stay in registers and need no reference counting.


@njit(cache=True)
def _entries(m):
    """Row-major 9-tuple of a 3x3 array."""
    return (m[0, 0], m[0, 1], m[0, 2], m[1, 0], m[1, 1], m[1, 2], m[2, 0], m[2, 1], m[2, 2])


@njit(cache=True)
def _matrix(e):
    out = np.empty((3, 3))
    for k in range(9):
        out[k // 3, k % 3] = e[k]
    return out


@njit(cache=True)
def _max_abs(e):
    out = 0.0
    for k in range(9):
        out = max(out, abs(e[k]))
    return out


@njit(cache=True)
def _derivative_entries(o):
    diff = o[0] - o[4]
    return (-2.0 * o[1], diff, -o[5],
            diff, 2.0 * o[1], o[2],
            -o[5], o[2], 0.0)


@njit(cache=True)
def _pencil_terms(lam):
    l00, l01, l02, l12 = lam[0], lam[1], lam[2], lam[5]
    a = l02 * l02 + l12 * l12 - l00 * l00 - l01 * l01
    b = l00 * (l12 * l12 - l02 * l02) - 2.0 * l01 * l02 * l12
    return a, b


@njit(cache=True)
def _cubic(g, a, b):
    return (g * g + a) * g + b


@njit(cache=True)
def _depressed_cubic_root(a, b):
    """One real root of g^3 + a g + b (Cardano / trigonometric form, one Newton step)."""
    if a == 0.0 and b == 0.0:
        return 0.0
    q = a / 3.0
    h = b / 2.0
    disc = h * h + q * q * q
    if disc > 0.0:
        sd = math.sqrt(disc)
        # pick the sign that avoids cancellation in -h -/+ sd
        t = -h - sd if h >= 0.0 else -h + sd
        u = math.copysign(abs(t) ** (1.0 / 3.0), t)
        root = u - q / u if u != 0.0 else 0.0
    else:
        # three real roots, a < 0
        m = 2.0 * math.sqrt(-q)
        arg = 3.0 * b / (a * m)
        arg = min(1.0, max(-1.0, arg))
        root = m * math.cos(math.acos(arg) / 3.0)
    f = _cubic(root, a, b)
    fp = 3.0 * root * root + a
    if fp != 0.0:
        polished = root - f / fp
        if abs(_cubic(polished, a, b)) <= abs(f):
            root = polished
    return root


@njit(cache=True, inline='always')
def _adjugate_entries(s):
    return (s[4] * s[8] - s[5] * s[7],
            s[2] * s[7] - s[1] * s[8],
            s[1] * s[5] - s[2] * s[4],
            s[5] * s[6] - s[3] * s[8],
            s[0] * s[8] - s[2] * s[6],
            s[2] * s[3] - s[0] * s[5],
            s[3] * s[7] - s[4] * s[6],
            s[1] * s[6] - s[0] * s[7],
            s[0] * s[4] - s[1] * s[3])


@njit(cache=True)
def _rank_one_entries(s):
    """Line l with s proportional to l l^T, taken from the dominant diagonal row."""
    i = 0
    for k in range(1, 3):
        if abs(s[4 * k]) > abs(s[4 * i]):
            i = k
    d = abs(s[4 * i])
    root = math.sqrt(d) if d > 0.0 else 1.0
    return s[3 * i] / root, s[3 * i + 1] / root, s[3 * i + 2] / root


@njit(cache=True)
def _split_entries(s, zero_tol):
    """Split a degenerate conic into lines.

    Returns (count, l1, l2) with count 0 for a zero conic, 1 for a double
    line and 2 for a line pair.
    """
    zero = (0.0, 0.0, 0.0)
    scale = _max_abs(s)
    if scale <= zero_tol:
        return 0, zero, zero
    g = _adjugate_entries(s)
    rank_one = _max_abs(g) < ADJUGATE_ZERO * scale * scale
    i = 0
    if not rank_one:
        for k in range(1, 3):
            if abs(g[4 * k]) > abs(g[4 * i]):
                i = k
        # a real line pair has a negative semidefinite adjugate diagonal
        rank_one = not (-g[4 * i] > 0.0)
    if rank_one:
        return 1, _rank_one_entries(s), zero
    root = math.sqrt(-g[4 * i])
    z0 = g[3 * i] / root
    z1 = g[3 * i + 1] / root
    z2 = g[3 * i + 2] / root
    # s + [z]x has rank one: l1 l2^T
    h = (s[0], s[1] - z2, s[2] + z1,
         s[3] + z2, s[4], s[5] - z0,
         s[6] - z1, s[7] + z0, s[8])
    best = 0
    for k in range(1, 9):
        if abs(h[k]) > abs(h[best]):
            best = k
    br = best // 3
    bc = best % 3
    return 2, (h[3 * br], h[3 * br + 1], h[3 * br + 2]), (h[bc], h[3 + bc], h[6 + bc])


@njit(cache=True)
def _circle_hits(a, b, c):
    """Return (count, x0, y0, x1, y1) with count -1 for the line at infinity."""
    big = max(abs(a), abs(b), abs(c))
    if big == 0.0:
        return -1, 0.0, 0.0, 0.0, 0.0
    # rescale first so a^2 + b^2 cannot underflow
    a, b, c = a / big, b / big, c / big
    nn = a * a + b * b
    if nn <= INFINITE_LINE * c * c or nn == 0.0:
        return -1, 0.0, 0.0, 0.0, 0.0
    inv = 1.0 / math.sqrt(nn)
    a *= inv
    b *= inv
    c *= inv
    # foot of the perpendicular from the origin is -c (a, b); chord half-length h
    disc = 1.0 - c * c
    if disc < -TANGENT_TOL:
        return 0, 0.0, 0.0, 0.0, 0.0
    fx = -c * a
    fy = -c * b
    if disc <= TANGENT_TOL:
        n = math.hypot(fx, fy)
        return 1, fx / n, fy / n, 0.0, 0.0
    h = math.sqrt(disc)
    x0 = fx - h * b
    y0 = fy + h * a
    x1 = fx + h * b
    y1 = fy - h * a
    n0 = math.hypot(x0, y0)
    n1 = math.hypot(x1, y1)
    return 2, x0 / n0, y0 / n0, x1 / n1, y1 / n1


@njit(cache=True)
def _closest_circle_point(a, b, c):
    n = math.sqrt(a * a + b * b)
    a /= n
    b /= n
    c /= n
    # value of a x + b y + c at -(a, b) is c - 1, at +(a, b) it is c + 1
    if c >= 0.0:
        return -a, -b
    return a, b


def _intersect_unit_circle(line):
    """Return (count, points) with count -1 for the line at infinity."""
    count, x0, y0, x1, y1 = _circle_hits(float(line[0]), float(line[1]), float(line[2]))
    pts = np.zeros((2, 2))
    if count > 0:
        pts[0] = x0, y0
    if count > 1:
        pts[1] = x1, y1
    return count, pts


# --------------------------------------------------------------------------- public API


def derivative_conic(omega) -> np.ndarray:
    """Conic whose zero set holds the stationary points of r^T omega r on the circle.

    Its quadratic form equals ``y * df/dx - x * df/dy`` for ``f = r^T omega r``
    and it always passes through the origin.
    """
    return _matrix(_derivative_entries(_entries(np.asarray(omega, dtype=np.float64))))


def pencil_coefficients(lam) -> tuple[float, float]:
    """Coefficients (a, b) with det(lam + g * UNIT_CIRCLE) = -(g^3 + a g + b).

    ``lam`` must have the shape of a derivative conic: zero (2, 2) entry and
    lam[1, 1] == -lam[0, 0].
    """
    lam = _entries(np.asarray(lam, dtype=np.float64))
    tol = 1e-12 * _max_abs(lam)
    if abs(lam[8]) > tol or abs(lam[0] + lam[4]) > tol:
        raise ValueError("pencil_coefficients expects a derivative conic (lam[2,2] = 0, lam[1,1] = -lam[0,0])")
    return _pencil_terms(lam)


def solve_depressed_cubic(a: float, b: float) -> float:
    """A real root of g^3 + a g + b = 0."""
    return _depressed_cubic_root(float(a), float(b))


def adjugate(m) -> np.ndarray:
    return _matrix(_adjugate_entries(_entries(np.asarray(m, dtype=np.float64))))


def decompose_conic(sigma, scale: float | None = None):
    """Split a degenerate conic into ``(l1, l2)``; ``l2`` is None for a double line.

    ``scale`` sets the magnitude below which the conic counts as zero
    (``1e-14 * scale``); by default only an exactly zero conic does.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    size = _max_abs(_entries(sigma))
    zero_tol = 1e-14 * scale if scale is not None else 0.0
    if size <= zero_tol:
        raise ZeroConic("conic has no nonzero entries")
    if abs(np.linalg.det(sigma)) >= 1e-8 * size ** 3:
        raise NotDegenerate(f"det = {np.linalg.det(sigma):.3g} is not ~0")
    count, l1, l2 = _split_entries(_entries(sigma), zero_tol)
    return (np.array(l1), np.array(l2)) if count == 2 else (np.array(l1), None)


def intersect_line_unit_circle(line) -> list[tuple[float, float]]:
    """Real intersections (0, 1 or 2 points) of a line with x^2 + y^2 = 1."""
    count, pts = _intersect_unit_circle(np.asarray(line, dtype=np.float64))
    if count < 0:
        raise LineAtInfinity(f"line {line} has no finite part")
    return [(float(pts[k, 0]), float(pts[k, 1])) for k in range(count)]


def closest_circle_point_to_line(line) -> tuple[float, float]:
    """Point of the unit circle nearest the line, i.e. the minimizer of (l . r)^2."""
    line = np.asarray(line, dtype=np.float64)
    if line[0] == 0.0 and line[1] == 0.0:
        raise LineAtInfinity(f"line {line} has no finite part")
    x, y = _closest_circle_point(line[0], line[1], line[2])
    return float(x), float(y)
