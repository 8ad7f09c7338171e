import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numba import njit

from posegravity import LineAtInfinity, NotDegenerate, ZeroConic
from posegravity.conics import (
    UNIT_CIRCLE,
    _depressed_cubic_root,
    adjugate,
    closest_circle_point_to_line,
    decompose_conic,
    derivative_conic,
    intersect_line_unit_circle,
    pencil_coefficients,
    solve_depressed_cubic,
)
from posegravity.oracle import grid_search, loss_at

from .helpers import gravity_frame_scene
from posegravity import build_objective

coef = st.floats(-1e3, 1e3, allow_nan=False)


def random_symmetric(rng):
    a = rng.standard_normal((3, 3))
    return a + a.T


def _f(omega, x, y):
    r = np.array([x, y, 1.0])
    return r @ omega @ r


# --------------------------------------------------------------------------- derivative conic


def test_derivative_conic_examples():
    np.testing.assert_array_equal(derivative_conic(np.eye(3)), np.zeros((3, 3)))
    np.testing.assert_array_equal(derivative_conic(np.diag([2.0, 1.0, 1.0])),
                                  [[0, 1, 0], [1, 0, 0], [0, 0, 0]])


def test_derivative_conic_matches_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(20):
        omega = random_symmetric(rng)
        lam = derivative_conic(omega)
        assert lam[2, 2] == 0.0
        np.testing.assert_array_equal(lam, lam.T)
        for x, y in rng.uniform(-2, 2, (100, 2)):
            fx = (_f(omega, x + h, y) - _f(omega, x - h, y)) / (2 * h)
            fy = (_f(omega, x, y + h) - _f(omega, x, y - h)) / (2 * h)
            r = np.array([x, y, 1.0])
            assert r @ lam @ r == pytest.approx(y * fx - x * fy, abs=1e-6 * (1 + abs(y * fx) + abs(x * fy)))


# --------------------------------------------------------------------------- pencil


def test_pencil_examples():
    assert pencil_coefficients(np.zeros((3, 3))) == (0.0, 0.0)
    a, b = pencil_coefficients([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    assert (a, b) == (-1.0, 0.0)


def test_pencil_determinant_identity():
    rng = np.random.default_rng(1)
    for _ in range(200):
        lam = derivative_conic(random_symmetric(rng) * 10.0 ** rng.uniform(-3, 3))
        a, b = pencil_coefficients(lam)
        lam_scale = max(1.0, np.max(np.abs(lam)))
        for g in rng.uniform(-5, 5, 10) * lam_scale:
            det = np.linalg.det(lam + g * UNIT_CIRCLE)
            # with Phi = diag(1, 1, -1) the determinant is the negated monic cubic
            assert abs(det + (g ** 3 + a * g + b)) < 1e-9 * (lam_scale + abs(g)) ** 3
    with pytest.raises(ValueError):
        pencil_coefficients(np.eye(3))


# --------------------------------------------------------------------------- cubic


def test_cubic_examples():
    assert solve_depressed_cubic(0.0, -8.0) == pytest.approx(2.0, abs=1e-12)
    assert min(abs(solve_depressed_cubic(-7.0, -6.0) - r) for r in (3.0, -1.0, -2.0)) < 1e-12
    assert solve_depressed_cubic(0.0, 0.0) == 0.0
    assert solve_depressed_cubic(-3.0, 2.0) in (pytest.approx(1.0, abs=1e-6), pytest.approx(-2.0, abs=1e-12))


@njit
def _bisect_all_roots(a, b):
    # independent oracle: real roots by bisection between the critical points
    f = lambda g: (g * g + a) * g + b  # noqa: E731
    bound = 1.0 + max(abs(a), abs(b))
    cuts = [-bound]
    if a < 0:
        c = math.sqrt(-a / 3.0)
        cuts.append(-c)
        cuts.append(c)
    cuts.append(bound)
    roots = []
    for k in range(len(cuts) - 1):
        lo, hi = cuts[k], cuts[k + 1]
        flo, fhi = f(lo), f(hi)
        if flo == 0.0:
            roots.append(lo)
            continue
        if flo * fhi > 0:
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if fm == 0.0 or mid == lo or mid == hi:
                break
            if (fm < 0) == (flo < 0):
                lo, flo = mid, fm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    return roots


@njit
def _cubic_sweep(a_s, b_s):
    worst_res = 0.0
    worst_oracle = 0.0
    for k in range(a_s.shape[0]):
        a, b = a_s[k], b_s[k]
        g = _depressed_cubic_root(a, b)
        res = abs((g * g + a) * g + b) / max(1.0, abs(g) ** 3)
        worst_res = max(worst_res, res)
        gap = math.inf
        for r in _bisect_all_roots(a, b):
            gap = min(gap, abs(g - r) / max(1.0, abs(r)))
        worst_oracle = max(worst_oracle, gap)
    return worst_res, worst_oracle


def test_cubic_residual_sweep():
    rng = np.random.default_rng(2)
    n = 1_000_000
    scale = 10.0 ** rng.uniform(-12, 6, n)
    a = rng.standard_normal(n) * scale
    b = rng.standard_normal(n) * scale ** 1.5
    # near triple roots and the three-real-root boundary
    t = rng.standard_normal(50_000) * 10.0 ** rng.uniform(-8, 0, 50_000)
    a = np.concatenate([a, -3 * t ** 2, 1e-9 * rng.standard_normal(1000), np.zeros(1)])
    b = np.concatenate([b, 2 * t ** 3 * (1 + 1e-12 * rng.standard_normal(50_000)), 1e-12 * rng.standard_normal(1000),
                        np.zeros(1)])
    worst_res, worst_oracle = _cubic_sweep(a, b)
    assert worst_res < 1e-8
    # double roots are ill-conditioned (error ~ sqrt(eps)); simple roots match tightly
    assert worst_oracle < 1e-6


def test_cubic_matches_oracle_on_well_separated_roots():
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        a, b = rng.uniform(-100, 100, 2)
        g = solve_depressed_cubic(a, b)
        gap = min(abs(g - r) / max(1.0, abs(r)) for r in _bisect_all_roots(a, b))
        disc = -(4 * a ** 3 + 27 * b ** 2)
        if abs(disc) > 1e-3:
            assert gap < 1e-8


# --------------------------------------------------------------------------- decomposition


def _symmetrized(l1, l2):
    return 0.5 * (np.outer(l1, l2) + np.outer(l2, l1))


def _rel_fit(sigma, model):
    # best scalar multiple of the model, relative residual
    k = np.sum(sigma * model) / np.sum(model * model)
    return np.linalg.norm(sigma - k * model) / np.linalg.norm(sigma)


def test_decompose_examples():
    l1, l2 = decompose_conic(np.outer([1, 0, -1], [1, 0, -1]))
    assert l2 is None
    assert abs(l1[1]) < 1e-15 and l1[2] / l1[0] == pytest.approx(-1.0)

    l1, l2 = decompose_conic(np.diag([1.0, -1.0, 0.0]))
    found = {tuple(np.round(l / l[0], 12)) for l in (l1, l2)}
    assert found == {(1.0, 1.0, 0.0), (1.0, -1.0, 0.0)}


def test_decompose_errors():
    with pytest.raises(ZeroConic):
        decompose_conic(np.zeros((3, 3)))
    with pytest.raises(ZeroConic):
        decompose_conic(1e-20 * np.eye(3), scale=1.0)
    with pytest.raises(NotDegenerate):
        decompose_conic(np.eye(3))


def test_decompose_reconstructs_random_degenerate_conics():
    rng = np.random.default_rng(4)
    for _ in range(2000):
        a, b = rng.standard_normal((2, 3)) * 10.0 ** rng.uniform(-3, 3)
        sigma = _symmetrized(a, b) * rng.choice([-1.0, 1.0])
        l1, l2 = decompose_conic(sigma)
        assert l2 is not None
        assert _rel_fit(sigma, _symmetrized(l1, l2)) < 1e-7
        sigma = np.outer(a, a) * rng.choice([-1.0, 1.0])
        l1, l2 = decompose_conic(sigma)
        assert l2 is None
        assert _rel_fit(sigma, np.outer(l1, l1)) < 1e-7


def test_adjugate():
    a = np.random.default_rng(5).standard_normal((3, 3))
    np.testing.assert_allclose(adjugate(a), np.linalg.det(a) * np.linalg.inv(a), atol=1e-12)


def _local_minima_and_maxima(omega, samples=20_000):
    theta = np.arange(samples) * (2 * math.pi / samples)
    f = loss_at(omega, theta)
    prev, nxt = np.roll(f, 1), np.roll(f, -1)
    idx = np.nonzero(((f < prev) & (f <= nxt)) | ((f > prev) & (f >= nxt)))[0]
    out = []
    step = theta[1]
    for k in idx:
        sign = 1.0 if f[k] < prev[k] else -1.0
        lo, hi = theta[k] - step, theta[k] + step
        for _ in range(100):
            m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
            if sign * loss_at(omega, m1) < sign * loss_at(omega, m2):
                hi = m2
            else:
                lo = m1
        out.append(0.5 * (lo + hi))
    return out


def test_pencil_lines_hit_every_stationary_point():
    rng = np.random.default_rng(6)
    checked = 0
    for _ in range(300):
        points, lines, _, _ = gravity_frame_scene(rng, 4, 2, noise=0.05)
        omega = build_objective(points, lines).omega
        lam = derivative_conic(omega)
        gamma = solve_depressed_cubic(*pencil_coefficients(lam))
        sigma = lam + gamma * UNIT_CIRCLE
        l1, l2 = decompose_conic(sigma)
        found = []
        for line in (l1, l2):
            if line is not None:
                found += intersect_line_unit_circle(line)
        norm_lam = np.linalg.norm(lam)
        for x, y in found:
            r = np.array([x, y, 1.0])
            assert abs(r @ lam @ r) < 1e-7 * norm_lam
            assert abs(x * x + y * y - 1) < 1e-9
        angles = [math.atan2(y, x) for x, y in found]
        for t in _local_minima_and_maxima(omega):
            gap = min(abs(math.remainder(t - a, 2 * math.pi)) for a in angles)
            # stationary points located by ternary search carry ~1e-8 angular error
            assert gap < 1e-6
            checked += 1
        best = grid_search(omega)
        assert min(loss_at(omega, a) for a in angles) <= best.loss + 1e-9 * np.linalg.norm(omega)
    assert checked > 600


# --------------------------------------------------------------------------- line / circle


def _as_set(pts):
    return sorted((round(x, 12) + 0.0, round(y, 12) + 0.0) for x, y in pts)


def test_intersection_examples():
    assert _as_set(intersect_line_unit_circle([1, 0, 0])) == [(0.0, -1.0), (0.0, 1.0)]
    assert intersect_line_unit_circle([1, 0, -2]) == []
    assert _as_set(intersect_line_unit_circle([1, 1, -1])) == [(0.0, 1.0), (1.0, 0.0)]
    assert _as_set(intersect_line_unit_circle([0, 1, -1])) == [(0.0, 1.0)]
    with pytest.raises(LineAtInfinity):
        intersect_line_unit_circle([0, 0, 1])


@settings(max_examples=500, deadline=None)
@given(coef, coef, coef)
def test_intersection_points_on_line_and_circle(a, b, c):
    if a == 0 and b == 0:
        return
    line = np.array([a, b, c])
    sa, sb, sc = line / np.max(np.abs(line))
    if sa * sa + sb * sb <= 1e-28 * sc * sc:
        # numerically the line at infinity
        with pytest.raises(LineAtInfinity):
            intersect_line_unit_circle(line)
        return
    pts = intersect_line_unit_circle(line)
    if not pts:
        assert sc * sc >= (sa * sa + sb * sb) * (1 - 1e-12)
    scale = math.hypot(a, b)
    for x, y in pts:
        assert abs(x * x + y * y - 1) < 1e-9
        assert abs(a * x + b * y + c) <= 1e-9 * (scale + abs(c))


def test_intersection_near_tangent_lines():
    for gap in (1e-3, 1e-6, 1e-9, 1e-12, 1e-15):
        line = np.array([0.6, 0.8, -(1 - gap)])
        pts = intersect_line_unit_circle(line)
        for x, y in pts:
            assert abs(x * x + y * y - 1) < 1e-9
            assert abs(line @ [x, y, 1]) < 1e-9


def test_closest_point_examples():
    assert closest_circle_point_to_line([1, 0, -2]) == (1.0, 0.0)
    x, y = closest_circle_point_to_line([0, 1, 5])
    assert (x + 0.0, y) == (0.0, -1.0)
    with pytest.raises(LineAtInfinity):
        closest_circle_point_to_line([0, 0, 1])


def test_closest_point_beats_grid():
    rng = np.random.default_rng(7)
    theta = np.arange(10_000) * (2 * math.pi / 10_000)
    circle = np.column_stack([np.cos(theta), np.sin(theta), np.ones_like(theta)])
    for _ in range(1000):
        ab = rng.standard_normal(2)
        c = np.linalg.norm(ab) * rng.uniform(1.0, 5.0) * rng.choice([-1, 1])
        line = np.array([*ab, c])
        x, y = closest_circle_point_to_line(line)
        assert abs(x * x + y * y - 1) < 1e-12
        assert (line @ [x, y, 1]) ** 2 <= np.min((circle @ line) ** 2) * (1 + 1e-12)
