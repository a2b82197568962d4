import math

import numpy as np
import pytest
from scipy import optimize

from hyperwass.certificates import (
    DualValue,
    NRunAggregate,
    corollary_sandwich,
    dual_value,
    lower_bound,
    surface_unit_ball,
)
from hyperwass.geometry import Cube, cube_for_count
from hyperwass.moments import MomentEnvelope
from hyperwass.processes import MeanDensity, PointSet, uniform_mean
from hyperwass.transport import semidiscrete_wp


def test_surface_measures():
    assert surface_unit_ball(1) == pytest.approx(2.0)
    assert surface_unit_ball(2) == pytest.approx(2.0 * math.pi)
    assert surface_unit_ball(3) == pytest.approx(4.0 * math.pi)
    with pytest.raises(ValueError):
        surface_unit_ball(0)


# ---------------------------------------------------------------------------
# closed-form cone bound


def test_lower_bound_reference_values():
    cert = lower_bound(2, 1.0, 100, 1.0)
    assert cert.c_star == pytest.approx((1.0 / math.pi) ** 0.5)
    assert cert.w1_bound == pytest.approx(37.612638903183754, rel=1e-12)
    assert cert.wp_bound == cert.w1_bound
    unit = lower_bound(1, 1.0, 1, 1.0)
    assert unit.wp_bound == pytest.approx(0.25)


def test_lower_bound_A_scaling():
    base = lower_bound(3, 2.0, 50, 1.0)
    heavy = lower_bound(3, 2.0, 50, 8.0)
    assert heavy.wp_bound == pytest.approx(base.wp_bound * 8.0 ** (-1.0 / 3.0))
    assert heavy.wp_bound < base.wp_bound  # inflating A can only weaken the bound


def test_lower_bound_n_scaling():
    one = lower_bound(2, 2.0, 1, 1.0)
    many = lower_bound(2, 2.0, 49, 1.0)
    assert many.wp_bound == pytest.approx(one.wp_bound * 7.0)
    assert many.w1_bound == pytest.approx(one.w1_bound * 49.0)


def test_objective_peaks_at_c_star():
    for d, A in [(1, 1.0), (2, 1.0), (2, 3.0), (3, 2.0)]:
        cert = lower_bound(d, 1.0, 1, A)
        grid = np.linspace(1e-4, 3.0 * cert.c_star, 4001)
        vals = cert.objective(grid)
        assert vals.max() <= cert.objective_at_c_star + 1e-9
        res = optimize.minimize_scalar(
            lambda c: -float(cert.objective(c)), bounds=(1e-6, 3.0 * cert.c_star), method="bounded"
        )
        assert res.x == pytest.approx(cert.c_star, rel=1e-4)


def test_lower_bound_validation():
    with pytest.raises(ValueError):
        lower_bound(2, 1.0, 0, 1.0)
    with pytest.raises(ValueError):
        lower_bound(2, 1.0, 5, 0.0)
    with pytest.raises(ValueError):
        lower_bound(2, 0.5, 5, 1.0)


def test_lower_bound_below_certified_cost():
    # the closed form must sit under a certified lower estimate of the
    # true cost on concrete instances
    rng = np.random.default_rng(8)
    for i in range(10):
        n = int(rng.integers(4, 20))
        cube = cube_for_count(n, 2, centered=False)
        pts = rng.random((n, 2)) * cube.side
        est = semidiscrete_wp(PointSet(cube, pts), uniform_mean(cube), 2.0, 5)
        cert = lower_bound(2, 2.0, n, 1.0)
        assert cert.wp_bound <= max(est.lower, 0.0) ** 0.5 + 1e-9 or cert.wp_bound <= est.upper**0.5


# ---------------------------------------------------------------------------
# numerical dual


def centered_point_density(side=8.0):
    cube = Cube(2, side)
    return np.array([[side / 2.0, side / 2.0]]), uniform_mean(cube)


def test_dual_matches_whole_space_formula():
    # a cone of height c* around an interior point is supported strictly
    # inside the cube, so the cube integral equals the closed form
    pts, dens = centered_point_density()
    cert = lower_bound(2, 1.0, 1, 1.0)
    dv = dual_value(pts, dens, cert.c_star)
    assert dv.value == pytest.approx(cert.objective_at_c_star, abs=5e-6)
    assert dv.tol_met
    assert dv.certified <= dv.value
    assert dv.certified >= dv.value - 2.0 * dv.tol
    assert not dv.clamped


def test_dual_argmax_near_c_star():
    pts, dens = centered_point_density()
    cert = lower_bound(2, 1.0, 1, 1.0)
    cs = np.linspace(0.2, 2.0, 25) * cert.c_star
    vals = [dual_value(pts, dens, float(c)).value for c in cs]
    best = cs[int(np.argmax(vals))]
    assert abs(best - cert.c_star) <= 0.05 * cert.c_star


def test_dual_exact_in_one_dimension():
    # interval cells are integrated in closed form, so the dual is exact
    cube = Cube(1, 8.0)
    cert = lower_bound(1, 1.0, 1, 1.0)
    dv = dual_value(np.array([[4.0]]), uniform_mean(cube), cert.c_star)
    assert dv.value == pytest.approx(cert.objective_at_c_star, abs=1e-12)
    assert dv.error_estimate == 0.0


def test_dual_three_dimensions_honest_budget():
    cube = Cube(3, 8.0)
    cert = lower_bound(3, 1.0, 1, 1.0)
    dv = dual_value(np.array([[4.0, 4.0, 4.0]]), uniform_mean(cube), cert.c_star)
    want = cert.objective_at_c_star
    assert abs(dv.value - want) <= dv.error_estimate + 1e-9
    assert dv.certified <= want + 1e-9


def test_dual_small_c_vanishes():
    pts, dens = centered_point_density()
    dv = dual_value(pts, dens, 1e-3)
    assert 0.0 <= dv.value <= 1e-3


def test_dual_coincident_points_share_one_cone():
    # two coincident points carry the same cone, so the integral term is
    # identical and the dual grows by a full extra c
    pts, dens = centered_point_density()
    pair = np.vstack([pts, pts])
    cert = lower_bound(2, 1.0, 1, 1.0)
    c = cert.c_star
    one = dual_value(pts, dens, c)
    two = dual_value(pair, dens, c)
    assert two.integral == pytest.approx(one.integral, abs=5e-6)
    assert two.value == pytest.approx(one.value + c, abs=1e-5)


def test_dual_truncation_only_helps():
    # near the boundary part of the cone leaves the cube; dropping it can
    # only shrink the integral, so the dual can only grow
    cube = Cube(2, 8.0)
    dens = uniform_mean(cube)
    cert = lower_bound(2, 1.0, 1, 1.0)
    corner = np.array([[0.05, 0.05]])
    dv = dual_value(corner, dens, cert.c_star)
    assert dv.value >= cert.objective_at_c_star - 5e-6


def test_dual_below_exact_cost():
    rng = np.random.default_rng(4)
    for i in range(5):
        n = int(rng.integers(1, 7))
        cube = cube_for_count(max(n, 4), 2, centered=False)
        pts = rng.random((n, 2)) * cube.side
        dens = uniform_mean(cube, rate=n / cube.volume)
        cert = lower_bound(2, 1.0, n, 1.0)
        c = float(rng.uniform(0.2, 2.0)) * cert.c_star
        dv = dual_value(pts, dens, c)
        est = semidiscrete_wp(PointSet(cube, pts), dens, 1.0, 5)
        assert dv.certified <= est.upper + 1e-9


def test_dual_piecewise_density_matches_uniform():
    cube = Cube(2, 4.0)
    flat = MeanDensity(cube, a=1.0, A=1.0, kind="piecewise", level=2, values=np.ones(16))
    uni = uniform_mean(cube)
    pts = np.array([[2.0, 2.0]])
    a = dual_value(pts, flat, 0.5)
    b = dual_value(pts, uni, 0.5)
    assert a.value == pytest.approx(b.value, abs=1e-5)


def test_dual_validation():
    pts, dens = centered_point_density()
    with pytest.raises(ValueError):
        dual_value(pts, dens, 0.0)
    with pytest.raises(ValueError):
        dual_value(np.array([[1.0, 1.0, 1.0]]), dens, 0.5)


# ---------------------------------------------------------------------------
# two-sided sandwich


def lattice_runs(Ns, reps=12):
    # constructive cost of a radius<1/2 perturbed lattice is exactly 2N
    return [
        NRunAggregate(N=float(N), costs=np.full(reps, 2.0 * N), counts=np.full(reps, float(N)))
        for N in Ns
    ]


def test_sandwich_lattice_rows_within():
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    report = corollary_sandwich(lattice_runs([16, 64, 256]), 2.0, 2, 1.0, 1.0, env)
    assert report.all_within
    assert report.delta_paper == pytest.approx(4.0)
    for row in report.rows:
        assert row.lower_paper == 0.0
        assert row.lower_paper_vacuous
        assert row.ratio == pytest.approx(2.0)
        assert row.empirical_good_fraction == 1.0
        assert row.lower_empirical > 0.0
        assert row.lower_empirical <= row.ratio
        assert not row.crude_regime


def test_sandwich_flags_crude_regime():
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    report = corollary_sandwich(lattice_runs([2]), 2.0, 2, 1.0, 1.0, env)
    assert report.rows[0].crude_regime


def test_sandwich_validation():
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    with pytest.raises(ValueError):
        corollary_sandwich([], 2.0, 2, 1.0, 1.0, env)
    with pytest.raises(ValueError):
        corollary_sandwich(lattice_runs([16], reps=9), 2.0, 2, 1.0, 1.0, env)
    with pytest.raises(ValueError):
        corollary_sandwich(lattice_runs([16]), 2.0, 2, 1.0, 1.0, env, delta_empirical=1.5)
    with pytest.raises(ValueError):
        NRunAggregate(N=4.0, costs=np.ones(3), counts=np.ones(2))
