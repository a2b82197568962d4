import math

import numpy as np
import pytest

from hyperwass.errors import CeilingError
from hyperwass.geometry import cube_for_count
from hyperwass.moments import MomentEnvelope
from hyperwass.multiscale import (
    alpha_constants,
    analytic_scale_costs,
    build_ladder,
    combine_reports,
    constructive_upper_bound,
    good_event_diagnostics,
    theorem_bound,
)
from hyperwass.processes import MeanDensity, PointSet, ProcessSpec, sample, uniform_mean
from hyperwass.transport import exact_wp, semidiscrete_wp


def lattice_ladder(N, radius, seed, **kw):
    cube = cube_for_count(N, 2, centered=False)
    spec = ProcessSpec(family="perturbed_lattice", radius=radius, seed=seed, **kw)
    ps = sample(spec, cube)
    return build_ladder(ps, uniform_mean(cube)), ps


def binomial_ladder(N, seed, d=2):
    cube = cube_for_count(N, d, centered=False)
    ps = sample(ProcessSpec(family="binomial_iid", count=N, seed=seed), cube)
    return build_ladder(ps, uniform_mean(cube)), ps


# ---------------------------------------------------------------------------
# interpolation ladder


def test_ladder_on_exact_lattice_is_balanced():
    ladder, _ = lattice_ladder(16, 0.0, seed=0)
    assert ladder.depth == 2
    assert ladder.count == 16
    assert ladder.mean_total == pytest.approx(16.0)
    for k in range(ladder.depth + 1):
        np.testing.assert_allclose(ladder.ratios(k), 1.0, atol=1e-12)


def test_ladder_single_point_ratios():
    # one point in the row-major (1, 0) unit cell of a side-2 cube
    cube = cube_for_count(4, 2, centered=False)
    ps = PointSet(cube, np.array([[1.5, 0.5]]))
    ladder = build_ladder(ps, uniform_mean(cube, rate=0.25))
    assert ladder.depth == 1
    np.testing.assert_allclose(ladder.ratios(0), [1.0])
    np.testing.assert_allclose(ladder.ratios(1), [0.0, 0.0, 4.0, 0.0])


def test_ladder_rejects_empty_and_mismatched():
    cube = cube_for_count(4, 2, centered=False)
    with pytest.raises(ValueError):
        build_ladder(PointSet(cube, np.empty((0, 2))), uniform_mean(cube))
    other = cube_for_count(16, 2, centered=False)
    ps = PointSet(cube, np.array([[0.5, 0.5]]))
    with pytest.raises(ValueError):
        build_ladder(ps, uniform_mean(other))


def test_ladder_children_sum_to_parent():
    ladder, _ = binomial_ladder(256, seed=3)
    grid = ladder.grid
    for k in range(ladder.depth):
        fine = ladder.counts[k + 1]
        summed = np.zeros(grid.num_cells(k), dtype=np.int64)
        parents = grid.parent_index(k + 1, np.arange(grid.num_cells(k + 1)))
        np.add.at(summed, parents, fine)
        np.testing.assert_array_equal(summed, ladder.counts[k])


def test_quantized_measure_totals():
    ladder, _ = binomial_ladder(64, seed=4)
    for k in range(ladder.depth + 1):
        nu = ladder.quantized_measure(k, ladder.depth)
        assert nu.total == pytest.approx(64.0, rel=1e-12)
        finer = ladder.quantized_measure(k, ladder.depth + 2)
        assert finer.total == pytest.approx(64.0, rel=1e-12)
    with pytest.raises(ValueError):
        ladder.quantized_measure(2, 1)


# ---------------------------------------------------------------------------
# constructive certificate


def test_constructive_exact_lattice_reduces_to_last_mile():
    ladder, _ = lattice_ladder(16, 0.0, seed=0)
    for p in (1.0, 2.0):
        report = constructive_upper_bound(ladder, p)
        # every occupied square is integer balanced, so no scale solves run
        assert report.solves.sum() == 0
        np.testing.assert_allclose(report.constructive, 0.0)
        assert report.total == pytest.approx(report.last_mile)
        assert report.total == pytest.approx(2.0 ** (p / 2.0) * 16.0, rel=1e-12)
        assert report.total <= 2.0 ** (3.0 * p / 2.0) * 16.0


def test_constructive_small_radius_stays_balanced():
    # radius < 0.5 keeps each point inside its own unit cell, so dyadic
    # counts match the lattice at every level and the cost is pure last mile
    ladder, _ = lattice_ladder(64, 0.4, seed=9)
    report = constructive_upper_bound(ladder, 2.0)
    assert report.solves.sum() == 0
    assert report.total == pytest.approx(2.0 * 64.0, rel=1e-12)


def test_constructive_slack_nonnegative():
    for seed in (0, 1, 2):
        ladder, _ = binomial_ladder(64, seed=seed)
        report = constructive_upper_bound(ladder, 2.0)
        assert np.all(report.quantization_slack >= -1e-12)
        assert np.all(report.constructive >= report.raw_cost - 1e-12)
        assert report.total >= report.last_mile


def test_constructive_certificate_dominates_exact_cost():
    # the telescoped bound must sit above a certified lower bound on the
    # true transport cost to the mean measure
    for N, seed, level in [(16, 0, 5), (16, 5, 5), (64, 1, 5), (256, 2, 4)]:
        ladder, ps = binomial_ladder(N, seed=seed)
        report = constructive_upper_bound(ladder, 2.0)
        est = semidiscrete_wp(ps, uniform_mean(ps.cube), 2.0, level)
        assert report.total >= max(est.lower, 0.0) - 1e-9


def test_constructive_per_square_cost_dominates_glued_transport():
    # summing per-square exact solves yields a feasible plan between the
    # quantized interpolants, so each raw level cost bounds that exact cost
    ladder, _ = binomial_ladder(64, seed=7)
    q = 2
    report = constructive_upper_bound(ladder, 2.0, q=q)
    ran = [k for k in range(report.depth) if report.solves[k] > 0]
    assert ran, "expected at least one unbalanced level"
    for k in ran:
        mu_k = ladder.quantized_measure(k, k + q)
        mu_k1 = ladder.quantized_measure(k + 1, k + q)
        glued = exact_wp(mu_k, mu_k1, 2.0)
        assert report.raw_cost[k] >= glued.cost_p - 1e-7 * max(glued.cost_p, 1.0)


def test_constructive_piecewise_density_branch():
    # non-uniform mean: the proportionality argument needs ratio objects,
    # not raw counts; certificate must still dominate its own raw cost
    cube = cube_for_count(64, 2, centered=False)
    rng = np.random.default_rng(3)
    vals = np.where(np.arange(16) % 2 == 0, 0.5, 1.5)
    dens = MeanDensity(cube, a=0.5, A=1.5, kind="piecewise", level=2, values=vals)
    n = int(round(dens.total_mass))
    pts = rng.random((n, 2)) * cube.side
    ladder = build_ladder(PointSet(cube, pts), dens)
    report = constructive_upper_bound(ladder, 2.0)
    assert np.all(report.quantization_slack >= -1e-12)
    assert report.total >= report.last_mile
    assert report.solves.sum() > 0


def test_constructive_validation():
    ladder, _ = binomial_ladder(16, seed=0)
    with pytest.raises(ValueError):
        constructive_upper_bound(ladder, 2.0, q=0)
    with pytest.raises(ValueError):
        constructive_upper_bound(ladder, 2.0, q=7)
    with pytest.raises(ValueError):
        constructive_upper_bound(ladder, 0.5)


def test_constructive_refinement_ceiling_3d():
    ladder, _ = binomial_ladder(512, seed=1, d=3)
    with pytest.raises(CeilingError):
        constructive_upper_bound(ladder, 2.0, q=5)


# ---------------------------------------------------------------------------
# analytic scale costs


def test_alpha_constants_examples():
    a1, a2 = alpha_constants(2.0, 1.0, 0.0)
    assert a1 == 0.0
    assert a2 == pytest.approx(0.5 * 0.5**-2.0)
    a1b, _ = alpha_constants(2.0, 1.0, 1.0)
    assert a1b == pytest.approx(0.5**-1.0 * 2.0 * (1.0 + 4.0))


def test_analytic_constant_envelope_tracks_N_logsq():
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    for j in (2, 4, 6, 8):
        N = 4**j
        ladder, _ = binomial_ladder(N, seed=j)
        agg = analytic_scale_costs(ladder, env, 2.0)
        model = N * (1.0 + 0.5 * math.log(N)) ** 2
        assert 1.0 / 64.0 <= agg.analytic_total / model <= 64.0


def test_analytic_power_envelope_is_linear():
    env = MomentEnvelope(p=2.0, dimension=2, form="power", gamma=1.0, epsilon=0.5)
    ratios = []
    for j in (2, 3, 4, 5, 6, 7, 8):
        N = 4**j
        ladder, _ = binomial_ladder(N, seed=10 + j)
        agg = analytic_scale_costs(ladder, env, 2.0)
        ratios.append(agg.analytic_total / N)
    assert max(ratios) / min(ratios) <= 4.0


def test_analytic_scales_with_theta():
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    ladder, _ = binomial_ladder(64, seed=2)
    lo = analytic_scale_costs(ladder, env, 2.0, theta_p=0.5)
    hi = analytic_scale_costs(ladder, env, 2.0, theta_p=2.0)
    assert np.all(hi.analytic >= lo.analytic)
    assert hi.analytic_total > lo.analytic_total


def test_analytic_validation():
    ladder, _ = binomial_ladder(16, seed=0)
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    with pytest.raises(ValueError):
        analytic_scale_costs(ladder, env, 2.0, a=0.0)
    with pytest.raises(ValueError):
        analytic_scale_costs(ladder, env, 2.0, A=0.5)
    rising = MomentEnvelope(
        p=2.0,
        dimension=2,
        form="tabulated",
        gamma=1.0,
        knots=np.array([1.0, 4.0]),
        values=np.array([0.5, 0.9]),
    )
    with pytest.raises(ValueError):
        analytic_scale_costs(ladder, rising, 2.0)


def test_combine_reports_merges_columns():
    ladder, _ = binomial_ladder(64, seed=5)
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    cons = constructive_upper_bound(ladder, 2.0)
    ana = analytic_scale_costs(ladder, env, 2.0)
    both = combine_reports(cons, ana)
    assert both.total == cons.total
    assert both.analytic_total == ana.analytic_total
    assert both.q == cons.q and both.theta_p == ana.theta_p
    d = both.to_dict()
    assert d["constructive_cost"] is not None and d["analytic_cost"] is not None
    other = analytic_scale_costs(ladder, env, 1.0)
    with pytest.raises(ValueError):
        combine_reports(cons, other)


# ---------------------------------------------------------------------------
# headline envelope bound


def test_theorem_bound_reference_value():
    env = MomentEnvelope(p=1.0, dimension=2, form="constant", gamma=1.0)
    t = theorem_bound(100.0, 1.0, 1.0, 1.0, env, theta_p=1.0)
    assert t.value == pytest.approx(35873.089190323786, rel=1e-9)
    assert t.c_p == pytest.approx(64.0)
    assert t.integral == pytest.approx(math.log(100.0))


def test_theorem_bound_scaling_in_bounds():
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    base = theorem_bound(64.0, 2.0, 1.0, 1.0, env)
    double_A = theorem_bound(64.0, 2.0, 1.0, 2.0, env)
    assert double_A.value == pytest.approx(base.value * 2.0**2.0)
    half_a = theorem_bound(64.0, 2.0, 0.5, 1.0, env)
    assert half_a.value == pytest.approx(base.value * 0.5 ** (1.0 - 4.0))


def test_theorem_bound_monotone_in_N():
    env = MomentEnvelope(p=2.0, dimension=2, form="power", gamma=1.0, epsilon=0.5)
    vals = [theorem_bound(float(N), 2.0, 1.0, 1.0, env).value for N in (4, 16, 64, 256, 1024)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_theorem_bound_validation():
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    with pytest.raises(ValueError):
        theorem_bound(0.0, 2.0, 1.0, 1.0, env)
    with pytest.raises(ValueError):
        theorem_bound(16.0, 2.0, 0.0, 1.0, env)
    with pytest.raises(ValueError):
        theorem_bound(16.0, 2.0, 1.0, 0.5, env)
    with pytest.raises(ValueError):
        theorem_bound(16.0, 0.5, 1.0, 1.0, env)


# ---------------------------------------------------------------------------
# good events


def test_good_event_lattice_never_fails():
    ladder, _ = lattice_ladder(256, 0.4, seed=2)
    report = good_event_diagnostics(ladder)
    assert len(report.levels) == 4
    assert report.failures.sum() == 0
    np.testing.assert_allclose(report.frequencies, 0.0)
    assert report.predictions is None


def test_good_event_prediction_formula():
    ladder, _ = binomial_ladder(64, seed=0)
    env = MomentEnvelope(p=2.0, dimension=2, form="constant", gamma=0.5)
    report = good_event_diagnostics(ladder, envelope=env)
    for k, pred in zip(report.levels, report.predictions):
        vol = 64.0 / 4.0**k
        assert pred == pytest.approx(min(1.0, 0.5**-2.0 * vol**-1.0 * 0.5**2.0))


def test_good_event_counts_starved_cells():
    cube = cube_for_count(16, 2, centered=False)
    rng = np.random.default_rng(0)
    pts = rng.random((16, 2))  # all sixteen points clump into one unit cell
    ladder = build_ladder(PointSet(cube, pts), uniform_mean(cube))
    report = good_event_diagnostics(ladder)
    np.testing.assert_array_equal(report.levels, [0, 1])
    assert report.failures[0] == 0
    assert report.failures[1] == 3  # three of four level-1 squares are empty
    assert report.frequencies[1] == pytest.approx(0.75)


def test_good_event_threshold_validation():
    ladder, _ = binomial_ladder(16, seed=0)
    with pytest.raises(ValueError):
        good_event_diagnostics(ladder, threshold=0.05)
    with pytest.raises(ValueError):
        good_event_diagnostics(ladder, threshold=0.95)
