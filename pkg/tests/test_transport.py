import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from hyperwass.errors import CeilingError, MassMismatchError
from hyperwass.geometry import EUCLIDEAN, TORUS, Cube
from hyperwass.processes import MeanDensity, PointSet, uniform_mean
from hyperwass.transport import (
    DiscreteMeasure,
    exact_wp,
    holder_lift,
    measure_from_points,
    oracle_wp,
    quantize_density,
    rescale_pushforward,
    semidiscrete_wp,
)
from hyperwass._mcf import batched_transport_costs, solve_transport


def atoms(*rows, masses=None):
    sup = np.asarray(rows, dtype=float)
    w = np.ones(len(sup)) if masses is None else np.asarray(masses, dtype=float)
    return DiscreteMeasure(sup, w)


def test_identical_measures_cost_zero():
    mu = atoms([0.1, 0.2], [1.5, 0.7], masses=[2.0, 3.0])
    plan = exact_wp(mu, mu, 2.0)
    assert plan.cost_p == pytest.approx(0.0, abs=1e-12)


def test_single_pair_distance_power():
    plan = exact_wp(atoms([0.0, 0.0]), atoms([3.0, 4.0]), 2.0)
    assert plan.cost_p == pytest.approx(25.0, rel=1e-12)


def test_two_atom_identity_matching():
    mu = atoms([0.0, 0.0], [1.0, 0.0])
    nu = atoms([0.0, 1.0], [1.0, 1.0])
    plan = exact_wp(mu, nu, 2.0)
    assert plan.cost_p == pytest.approx(2.0, rel=1e-12)


def test_solver_is_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(10):
        mu = oracles.random_measure(rng, 6, 2)
        nu = oracles.rescale_masses(oracles.random_measure(rng, 9, 2), mu.total)
        assert exact_wp(mu, nu, 2.0).cost_p == pytest.approx(
            exact_wp(nu, mu, 2.0).cost_p, rel=1e-9
        )


def test_plan_marginals_conserved():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n, m = rng.integers(2, 12, size=2)
        mu = oracles.random_measure(rng, n, 2)
        nu = oracles.rescale_masses(oracles.random_measure(rng, m, 2), mu.total)
        p = float(rng.choice([1.0, 2.0, 3.0]))
        plan = exact_wp(mu, nu, p)
        np.testing.assert_allclose(plan.row_sums(), mu.masses, rtol=0, atol=1e-9 * mu.total)
        np.testing.assert_allclose(plan.col_sums(), nu.masses, rtol=0, atol=1e-9 * mu.total)
        assert np.all(plan.mass >= 0)


def test_matches_assignment_solver():
    rng = np.random.default_rng(2)
    for _ in range(25):
        n = int(rng.integers(2, 10))
        d = int(rng.integers(1, 4))
        mu = oracles.random_measure(rng, n, d, unit=True)
        nu = oracles.random_measure(rng, n, d, unit=True)
        p = float(rng.choice([1.0, 2.0, 3.0]))
        assert exact_wp(mu, nu, p).cost_p == pytest.approx(
            oracles.assignment_cost(mu, nu, p), rel=1e-9
        )


def test_matches_linear_program():
    rng = np.random.default_rng(3)
    for _ in range(15):
        n, m = rng.integers(2, 9, size=2)
        mu = oracles.random_measure(rng, int(n), 2)
        nu = oracles.rescale_masses(oracles.random_measure(rng, int(m), 2), mu.total)
        p = float(rng.choice([1.0, 2.0]))
        assert exact_wp(mu, nu, p).cost_p == pytest.approx(
            oracles.lp_cost(mu, nu, p), rel=1e-7
        )


def test_mass_mismatch_rejected():
    with pytest.raises(MassMismatchError):
        exact_wp(atoms([0.0], masses=[1.0]), atoms([1.0], masses=[2.0]), 1.0)


def test_support_ceiling():
    big = DiscreteMeasure(np.zeros((10_001, 1)), np.ones(10_001))
    other = DiscreteMeasure(np.ones((10_000, 1)), np.ones(10_000) * 1.0001)
    with pytest.raises(CeilingError):
        exact_wp(big, other, 1.0)


def test_oracle_single_point():
    assert oracle_wp(atoms([0.0, 0.0]), atoms([1.0, 1.0]), 3.0) == pytest.approx(
        2.0**1.5, rel=1e-12
    )


def test_oracle_agrees_with_solver():
    rng = np.random.default_rng(4)
    for _ in range(30):
        n = int(rng.integers(1, 9))
        d = int(rng.integers(1, 4))
        mu = oracles.random_measure(rng, n, d, unit=True)
        nu = oracles.random_measure(rng, n, d, unit=True)
        p = float(rng.choice([1.0, 2.0, 3.0]))
        assert oracle_wp(mu, nu, p) == pytest.approx(exact_wp(mu, nu, p).cost_p, rel=1e-9)


def test_oracle_collinear_adversary():
    xs = np.arange(8.0)
    mu = DiscreteMeasure(np.column_stack([xs, np.zeros(8)]), np.ones(8))
    nu = DiscreteMeasure(np.column_stack([xs[::-1] + 0.25, np.zeros(8)]), np.ones(8))
    assert oracle_wp(mu, nu, 2.0) == pytest.approx(exact_wp(mu, nu, 2.0).cost_p, rel=1e-9)


def test_oracle_limits():
    nine = DiscreteMeasure(np.zeros((9, 1)), np.ones(9))
    with pytest.raises(CeilingError):
        oracle_wp(nine, nine, 1.0)
    with pytest.raises(ValueError):
        oracle_wp(atoms([0.0], [1.0], masses=[1.0, 2.0]), atoms([0.0], [1.0]), 1.0)


def test_torus_no_costlier_than_euclidean():
    rng = np.random.default_rng(5)
    cube = Cube(2, 4.0, metric=TORUS)
    for _ in range(10):
        mu = oracles.random_measure(rng, 5, 2, unit=True)
        nu = oracles.random_measure(rng, 5, 2, unit=True)
        ce = exact_wp(mu, nu, 2.0, metric=EUCLIDEAN).cost_p
        ct = exact_wp(mu, nu, 2.0, metric=TORUS, side=4.0).cost_p
        assert ct <= ce + 1e-12
        assert ct == pytest.approx(
            oracles.assignment_cost(mu, nu, 2.0, metric=TORUS, side=4.0), rel=1e-9
        )


def test_triangle_inequality():
    rng = np.random.default_rng(6)
    for _ in range(20):
        p = float(rng.choice([1.0, 2.0, 3.0]))
        mu = oracles.random_measure(rng, 5, 2)
        nu = oracles.rescale_masses(oracles.random_measure(rng, 7, 2), mu.total)
        rho = oracles.rescale_masses(oracles.random_measure(rng, 6, 2), mu.total)
        w = lambda x, y: exact_wp(x, y, p).cost_p ** (1.0 / p)
        assert w(mu, rho) <= w(mu, nu) + w(nu, rho) + 1e-7


def test_order_monotonicity_for_probability_measures():
    rng = np.random.default_rng(7)
    for _ in range(10):
        mu = oracles.rescale_masses(oracles.random_measure(rng, 6, 2), 1.0)
        nu = oracles.rescale_masses(oracles.random_measure(rng, 6, 2), 1.0)
        w1 = exact_wp(mu, nu, 1.0).cost_p
        w2 = exact_wp(mu, nu, 2.0).cost_p ** (1 / 2)
        w3 = exact_wp(mu, nu, 3.0).cost_p ** (1 / 3)
        assert w1 <= w2 + 1e-9
        assert w2 <= w3 + 1e-9


@given(
    lam=st.floats(min_value=0.1, max_value=10.0),
    factor=st.floats(min_value=0.1, max_value=10.0),
    p=st.sampled_from([1.0, 2.0, 3.0]),
    seed=st.integers(min_value=0, max_value=50),
)
def test_rescaling_scales_cost_exactly(lam, factor, p, seed):
    rng = np.random.default_rng(seed)
    mu = oracles.random_measure(rng, 5, 2)
    nu = oracles.rescale_masses(oracles.random_measure(rng, 6, 2), mu.total)
    base = exact_wp(mu, nu, p).cost_p
    scaled = exact_wp(
        rescale_pushforward(mu, lam, factor), rescale_pushforward(nu, lam, factor), p
    ).cost_p
    assert scaled == pytest.approx(factor * lam**p * base, rel=1e-9)


def test_rescale_examples():
    mu = atoms([0.0, 0.0], [1.0, 0.0])
    nu = atoms([0.0, 1.0], [1.0, 1.0])
    same = rescale_pushforward(mu, 1.0, 1.0)
    np.testing.assert_allclose(same.support, mu.support)
    np.testing.assert_allclose(same.masses, mu.masses)
    got = exact_wp(
        rescale_pushforward(mu, 2.0, 3.0), rescale_pushforward(nu, 2.0, 3.0), 2.0
    ).cost_p
    assert got == pytest.approx(24.0, rel=1e-12)
    with pytest.raises(MassMismatchError):
        exact_wp(rescale_pushforward(mu, 2.0, 3.0), nu, 2.0)
    with pytest.raises(ValueError):
        rescale_pushforward(mu, 0.0, 1.0)


def test_quantize_uniform_level2():
    cube = Cube(2, 4.0)
    q = quantize_density(uniform_mean(cube), 2)
    assert q.size == 16
    np.testing.assert_allclose(q.masses, np.ones(16))
    assert set(map(tuple, q.support)) == {
        (i + 0.5, j + 0.5) for i in range(4) for j in range(4)
    }


def test_quantize_level0_single_atom():
    cube = Cube(2, 4.0)
    q = quantize_density(uniform_mean(cube), 0)
    assert q.size == 1
    np.testing.assert_allclose(q.support[0], [2.0, 2.0])
    assert q.total == pytest.approx(16.0)


def test_quantize_piecewise_checkerboard():
    cube = Cube(2, 4.0)
    vals = np.array([0.5, 1.5, 1.5, 0.5])
    dens = MeanDensity(cube, a=0.5, A=1.5, kind="piecewise", level=1, values=vals)
    q = quantize_density(dens, 1)
    np.testing.assert_allclose(q.masses, vals * 4.0)
    assert q.total == pytest.approx(dens.total_mass, rel=1e-12)


def test_semidiscrete_at_matching_centers():
    cube = Cube(2, 4.0)
    centers = quantize_density(uniform_mean(cube), 2).support
    ps = PointSet(cube, centers)
    est = semidiscrete_wp(ps, uniform_mean(cube), 2.0, 2)
    assert est.quantized_cost == pytest.approx(0.0, abs=1e-9)
    assert est.lower == 0.0
    assert est.upper == pytest.approx(est.offset**2.0, rel=1e-12)


def test_semidiscrete_brackets_known_value():
    # mean distance from the center of a unit square: (sqrt 2 + asinh 1) / 6
    truth = (math.sqrt(2.0) + math.log(1.0 + math.sqrt(2.0))) / 6.0
    cube = Cube(2, 1.0)
    ps = PointSet(cube, np.array([[0.5, 0.5]]))
    est = semidiscrete_wp(ps, uniform_mean(cube), 1.0, 4)
    assert est.lower <= truth <= est.upper
    assert est.quantized_cost == pytest.approx(truth, rel=0.02)


def test_semidiscrete_width_shrinks_with_refinement():
    cube = Cube(2, 4.0)
    rng = np.random.default_rng(8)
    ps = PointSet(cube, rng.random((7, 2)) * 4.0)
    widths = [
        semidiscrete_wp(ps, uniform_mean(cube), 2.0, level).width for level in (1, 2, 3, 4)
    ]
    assert all(b <= a + 1e-12 for a, b in zip(widths, widths[1:]))


def test_semidiscrete_rejects_empty():
    cube = Cube(2, 4.0)
    with pytest.raises(ValueError):
        semidiscrete_wp(PointSet(cube, np.zeros((0, 2))), uniform_mean(cube), 2.0, 1)


def test_semidiscrete_rescales_to_point_mass():
    cube = Cube(2, 4.0)
    ps = PointSet(cube, np.array([[1.0, 1.0], [3.0, 2.0], [2.0, 3.0]]))
    est = semidiscrete_wp(ps, uniform_mean(cube), 1.0, 2)  # density mass 16 vs 3 points
    mu = measure_from_points(ps)
    nu = quantize_density(uniform_mean(cube), 2)
    scaled = DiscreteMeasure(nu.support, nu.masses * (3.0 / 16.0), cube)
    assert est.quantized_cost == pytest.approx(exact_wp(mu, scaled, 1.0).cost_p, rel=1e-9)


def test_holder_lift_examples():
    assert holder_lift(0.7, 5, 1.0) == 0.7
    assert holder_lift(0.7, 1, 3.0) == 0.7
    rng = np.random.default_rng(9)
    mu = oracles.random_measure(rng, 5, 2, unit=True)
    nu = oracles.random_measure(rng, 5, 2, unit=True)
    w1 = exact_wp(mu, nu, 1.0).cost_p
    for p in (2.0, 3.0):
        wp = exact_wp(mu, nu, p).cost_p ** (1.0 / p)
        assert holder_lift(w1, mu.total, p) <= wp + 1e-9
    with pytest.raises(ValueError):
        holder_lift(-1.0, 5, 2.0)


def test_plan_csv_export(tmp_path):
    plan = exact_wp(atoms([0.0, 0.0], [1.0, 0.0]), atoms([0.0, 1.0], [1.0, 1.0]), 2.0)
    path = tmp_path / "plan.csv"
    plan.to_csv(str(path))
    rows = path.read_text().strip().splitlines()
    assert rows[0].split(",") == ["i", "j", "mass", "dist"]
    assert len(rows) == 3


def test_batched_solves_match_singletons():
    rng = np.random.default_rng(10)
    T, S = 12, 16
    pos = rng.random((S, 2))
    C = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1) ** 2
    A = rng.random((T, S)) + 0.01
    A /= A.sum(axis=1, keepdims=True)
    B = rng.random((T, S)) + 0.01
    B /= B.sum(axis=1, keepdims=True)
    costs, diag = batched_transport_costs(A, B, C)
    for t in range(T):
        F, cost = solve_transport(A[t], B[t], C)
        assert costs[t] == pytest.approx(cost, rel=1e-12, abs=1e-15)
        assert diag[t] == pytest.approx(np.trace(F), rel=1e-12, abs=1e-15)
    assert np.all(diag >= 0) and np.all(diag <= 1 + 1e-12)


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((0, 2)), np.ones(0))
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((2, 2)), np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        exact_wp(atoms([0.0]), atoms([0.0, 0.0]), 0.5)
