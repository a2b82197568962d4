"""Exact and certified-approximate Wasserstein costs between finite measures.

``exact_wp`` solves the discrete transportation problem to optimality.
``oracle_wp`` is a deliberately separate brute-force route over all
assignments, kept independent so the two can police each other in tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._mcf import solve_transport
from .errors import CeilingError, MassMismatchError, NumericError
from .geometry import EUCLIDEAN, Cube, build_dyadic_grid, distance_matrix
from .processes import MeanDensity, PointSet

# Hard cap on combined support size for a single exact solve.
SUPPORT_CEILING = 20_000
MASS_RTOL = 1e-9
ORACLE_MAX_POINTS = 8


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point masses, optionally tied to a cube for its metric."""

    support: np.ndarray
    masses: np.ndarray
    cube: Cube | None = None

    def __post_init__(self):
        sup = np.atleast_2d(np.asarray(self.support, dtype=float))
        w = np.asarray(self.masses, dtype=float).ravel()
        if len(sup) != len(w):
            raise ValueError(f"{len(sup)} support points but {len(w)} masses")
        if len(w) == 0:
            raise ValueError("measure needs at least one atom")
        if not np.all(np.isfinite(sup)):
            raise ValueError("support coordinates must be finite")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("masses must be finite and nonnegative")
        if w.sum() <= 0:
            raise ValueError("total mass must be positive")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "masses", w)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def size(self) -> int:
        return len(self.masses)


def measure_from_points(ps: PointSet) -> DiscreteMeasure:
    """Counting measure of a point set (unit mass per point)."""
    if ps.count == 0:
        raise ValueError("empty point set has no counting measure")
    return DiscreteMeasure(ps.points, np.ones(ps.count), ps.cube)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse optimal plan plus its p-cost."""

    i: np.ndarray
    j: np.ndarray
    mass: np.ndarray
    dist: np.ndarray
    cost_p: float
    p: float
    shape: tuple[int, int]

    def row_sums(self) -> np.ndarray:
        out = np.zeros(self.shape[0])
        np.add.at(out, self.i, self.mass)
        return out

    def col_sums(self) -> np.ndarray:
        out = np.zeros(self.shape[1])
        np.add.at(out, self.j, self.mass)
        return out

    def to_csv(self, path: str):
        with open(path, "w") as fh:
            fh.write("i,j,mass,dist\n")
            for i, j, m, d in zip(self.i, self.j, self.mass, self.dist):
                fh.write(f"{i},{j},{m:.17g},{d:.17g}\n")


def _resolve_metric(mu: DiscreteMeasure, nu: DiscreteMeasure, metric: str | None, side: float | None):
    cubes = [c for c in (mu.cube, nu.cube) if c is not None]
    if metric is None:
        metric = cubes[0].metric if cubes else EUCLIDEAN
    if side is None and cubes:
        side = cubes[0].side
    return metric, side


def _check_pair(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float):
    if not (p >= 1):
        raise ValueError(f"order p must be >= 1, got {p}")
    if mu.support.shape[1] != nu.support.shape[1]:
        raise ValueError("measures live in different dimensions")
    if mu.size + nu.size > SUPPORT_CEILING:
        raise CeilingError(
            f"combined support {mu.size + nu.size} exceeds the exact-solve "
            f"ceiling {SUPPORT_CEILING}"
        )
    gap = abs(mu.total - nu.total)
    if gap > MASS_RTOL * max(mu.total, nu.total):
        raise MassMismatchError(
            f"total masses differ: {mu.total} vs {nu.total} (relative gap "
            f"{gap / max(mu.total, nu.total):.3e})"
        )


def exact_wp(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    p: float,
    metric: str | None = None,
    side: float | None = None,
) -> TransportPlan:
    """Optimal transport plan for W_p^p between two equal-mass measures.

    cost_p is W_p(mu, nu)^p. Masses may be any positive reals; totals must
    agree to relative 1e-9.
    """
    _check_pair(mu, nu, p)
    metric, side = _resolve_metric(mu, nu, metric, side)
    D = distance_matrix(mu.support, nu.support, metric=metric, side=side)
    C = D**p
    a = mu.masses / mu.total
    b = nu.masses / nu.total
    F, cost = solve_transport(a, b, C)
    if cost < 0:
        raise NumericError("transportation solver did not converge")
    ii, jj = np.nonzero(F > 0)
    plan = TransportPlan(
        i=ii.astype(np.int64),
        j=jj.astype(np.int64),
        mass=F[ii, jj] * mu.total,
        dist=D[ii, jj],
        cost_p=float(cost * mu.total),
        p=float(p),
        shape=(mu.size, nu.size),
    )
    _validate_plan(plan, mu, nu)
    return plan


def _validate_plan(plan: TransportPlan, mu: DiscreteMeasure, nu: DiscreteMeasure):
    tol = 1e-9 * mu.total
    if np.max(np.abs(plan.row_sums() - mu.masses)) > tol or np.max(
        np.abs(plan.col_sums() - nu.masses * (mu.total / nu.total))
    ) > tol:
        raise NumericError("transport plan marginals drifted beyond tolerance")


def oracle_wp(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    p: float,
    metric: str | None = None,
    side: float | None = None,
) -> float:
    """Brute-force W_p^p over all assignments; the reference for tiny inputs.

    Requires equal counts <= 8 and uniform masses on both sides, where an
    optimal plan is a one-to-one assignment.
    """
    if not (p >= 1):
        raise ValueError(f"order p must be >= 1, got {p}")
    n = mu.size
    if n != nu.size:
        raise ValueError("oracle needs equal support sizes")
    if n > ORACLE_MAX_POINTS:
        raise CeilingError(f"oracle handles at most {ORACLE_MAX_POINTS} points, got {n}")
    for w in (mu.masses, nu.masses):
        if np.max(np.abs(w - w[0])) > 1e-12 * max(abs(w[0]), 1e-300):
            raise ValueError("oracle needs uniform masses")
    gap = abs(mu.total - nu.total)
    if gap > MASS_RTOL * max(mu.total, nu.total):
        raise MassMismatchError(f"total masses differ: {mu.total} vs {nu.total}")
    metric, side = _resolve_metric(mu, nu, metric, side)
    C = distance_matrix(mu.support, nu.support, metric=metric, side=side) ** p
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    costs = C[np.arange(n)[None, :], perms].sum(axis=1)
    per_atom = mu.total / n
    return float(costs.min() * per_atom)


def quantize_density(density: MeanDensity, level: int) -> DiscreteMeasure:
    """Collapse a mean density onto dyadic cell centers at ``level``."""
    grid = build_dyadic_grid(density.cube)
    centers = grid.cell_centers(level)
    masses = density.cell_masses(level)
    return DiscreteMeasure(centers, masses, density.cube)


@dataclass(frozen=True)
class SandwichEstimate:
    """Certified two-sided bracket of W_p^p(points, mean measure)."""

    lower: float
    upper: float
    quantized_cost: float
    offset: float
    level: int
    p: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def semidiscrete_wp(ps: PointSet, density: MeanDensity, p: float, level: int) -> SandwichEstimate:
    """Bracket W_p^p between a point configuration and a continuous mean.

    Quantizing the density to cell centers at ``level`` moves any coupling's
    endpoints by at most the cell half-diagonal, so the exact quantized cost
    c_q yields the W_p bracket [c_q^(1/p) - e, c_q^(1/p) + e] with
    e = halfdiag * mass^(1/p). The density is rescaled to match the realized
    point count, keeping the comparison between equal-mass measures.
    """
    if ps.count == 0:
        raise ValueError("cannot bracket transport cost of an empty configuration")
    if not density.cube.same_geometry(ps.cube):
        raise ValueError("density and points live on different cubes")
    mu = measure_from_points(ps)
    nu_raw = quantize_density(density, level)
    scale = mu.total / nu_raw.total
    nu = DiscreteMeasure(nu_raw.support, nu_raw.masses * scale, nu_raw.cube)
    plan = exact_wp(mu, nu, p)
    grid = build_dyadic_grid(ps.cube)
    halfdiag = grid.cell_diameter(level) / 2.0
    e = halfdiag * mu.total ** (1.0 / p)
    root = plan.cost_p ** (1.0 / p)
    lower = max(0.0, root - e) ** p
    upper = (root + e) ** p
    return SandwichEstimate(
        lower=float(lower),
        upper=float(upper),
        quantized_cost=plan.cost_p,
        offset=float(e),
        level=level,
        p=float(p),
    )


def rescale_pushforward(measure: DiscreteMeasure, scale: float, mass_factor: float) -> DiscreteMeasure:
    """Push forward through x -> scale*x and multiply masses by mass_factor.

    Under this map W_p^p scales by mass_factor * scale^p, which tests verify.
    """
    if not (scale > 0 and mass_factor > 0):
        raise ValueError("scale and mass_factor must be positive")
    cube = measure.cube
    new_cube = None
    if cube is not None:
        new_cube = Cube(cube.dimension, cube.side * scale, cube.origin * scale, cube.metric)
    return DiscreteMeasure(measure.support * scale, measure.masses * mass_factor, new_cube)


def holder_lift(w1_cost: float, mass: float, p: float) -> float:
    """Lower bound on W_p obtained from W_1 between measures of this mass.

    Jensen gives W_1 <= mass^(1 - 1/p) * W_p, so W_p >= w1 / mass^(1 - 1/p).
    """
    if w1_cost < 0 or mass <= 0:
        raise ValueError("need w1_cost >= 0 and positive mass")
    if not (p >= 1):
        raise ValueError(f"order p must be >= 1, got {p}")
    return float(w1_cost / mass ** (1.0 - 1.0 / p))
