"""Dyadic interpolation between a configuration and its mean measure.

The ladder nu_0, ..., nu_K interpolates from the rescaled mean measure down
to cell-level resolution: nu_k redistributes each level-k cell's realized
count over that cell proportionally to the mean density. Two bounds on
W_p^p(mu_N, mean) come out of it:

* a constructive certificate: per-square exact transports between quantized
  restrictions, quantization slack added explicitly, glued by the L^p
  triangle inequality; valid pathwise with no unquantified constants;
* the analytic envelope bound with the interpolation constant theta_p,
  which is only known up to that constant.

Per-square transports never wrap around the torus; on torus cubes the
within-square euclidean cost is an upper bound for the torus cost, so the
certificate stays valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._mcf import batched_transport_costs
from .errors import CeilingError, NumericError
from .geometry import Cube, DyadicGrid, build_dyadic_grid, distance_matrix
from .moments import MomentEnvelope
from .processes import MeanDensity, PointSet
from .transport import SUPPORT_CEILING, DiscreteMeasure

GOOD_EVENT_THRESHOLD = 0.5


@dataclass(frozen=True, eq=False)
class InterpolationLadder:
    """Counts and mean masses on every dyadic level 0..depth."""

    grid: DyadicGrid
    density: MeanDensity
    counts: tuple
    mean_masses: tuple

    @property
    def depth(self) -> int:
        return self.grid.depth

    @property
    def count(self) -> int:
        return int(self.counts[0][0])

    @property
    def mean_total(self) -> float:
        return float(self.mean_masses[0][0])

    def ratios(self, level: int) -> np.ndarray:
        return self.counts[level] / self.mean_masses[level]

    def quantized_measure(self, k: int, level: int) -> DiscreteMeasure:
        """nu_k collapsed onto cell centers at ``level`` >= k."""
        if not (0 <= k <= level <= self.depth + 8):
            raise ValueError(f"need 0 <= k <= level, got k={k}, level={level}")
        d = self.grid.dimension
        fine = self.density.cell_masses(level)
        ratio = _broadcast_cells(self.ratios(k), d, level - k)
        centers = self.grid.cell_centers(level)
        keep = ratio * fine > 0
        if not keep.any():
            raise ValueError("measure is identically zero")
        return DiscreteMeasure(centers[keep], (ratio * fine)[keep], self.grid.cube)


def _broadcast_cells(flat: np.ndarray, d: int, delta: int) -> np.ndarray:
    """Replicate level-k cell values onto level k+delta cells (row-major)."""
    if delta == 0:
        return flat
    # len(flat) is (2^k)^d by construction; recover 2^k exactly
    k = int(round(math.log2(len(flat)) / d))
    m = 1 << k
    arr = flat.reshape((m,) * d)
    reps = 1 << delta
    for axis in range(d):
        arr = np.repeat(arr, reps, axis=axis)
    return arr.ravel()


def _children_matrix(flat_child_level: np.ndarray, d: int) -> np.ndarray:
    """(n_parents, 2^d) matrix of child values in row-major child order."""
    k1 = int(round(math.log2(len(flat_child_level)) / d))
    m1 = 1 << k1
    m = m1 // 2
    arr = flat_child_level.reshape(sum(((m, 2) for _ in range(d)), ()))
    perm = tuple(range(0, 2 * d, 2)) + tuple(range(1, 2 * d, 2))
    return arr.transpose(perm).reshape(m**d, 1 << d)


def build_ladder(ps: PointSet, density: MeanDensity) -> InterpolationLadder:
    """Bin points on every dyadic level and pair with exact mean masses."""
    if ps.count == 0:
        raise ValueError("cannot build an interpolation ladder on an empty configuration")
    if not density.cube.same_geometry(ps.cube):
        raise ValueError("density and points live on different cubes")
    grid = build_dyadic_grid(ps.cube)
    d = grid.dimension
    K = grid.depth
    if grid.num_cells(K) > 2**26:
        raise CeilingError(f"ladder would materialize {grid.num_cells(K)} cells at level {K}")
    idx = grid.cell_index(K, ps.points)
    counts = [np.bincount(idx, minlength=grid.num_cells(K)).astype(np.int64)]
    for _ in range(K):
        counts.append(_children_matrix(counts[-1], d).sum(axis=1))
    counts.reverse()  # counts[k] now holds level k
    means = [density.cell_masses(k) for k in range(K + 1)]
    ladder = InterpolationLadder(grid, density, tuple(counts), tuple(means))
    _check_ladder(ladder)
    return ladder


def _check_ladder(ladder: InterpolationLadder):
    total = ladder.count
    for k, c in enumerate(ladder.counts):
        if int(c.sum()) != total:
            raise NumericError(f"level {k} cell counts sum to {c.sum()}, expected {total}")
        if np.any(ladder.mean_masses[k] <= 0):
            raise NumericError(f"level {k} has a nonpositive mean cell mass")


@dataclass(frozen=True, eq=False)
class ScaleCostReport:
    """Per-level costs of the interpolation ladder plus totals.

    Constructive columns are pathwise certificates; the analytic column is
    the envelope bound with its theta_p-dependent constants. Either side
    may be absent when only the other was computed.
    """

    p: float
    dimension: int
    depth: int
    count: int
    mean_total: float
    levels: np.ndarray
    cells: np.ndarray
    good_event_failures: np.ndarray
    q: int | None = None
    constructive: np.ndarray | None = None
    raw_cost: np.ndarray | None = None
    quantization_slack: np.ndarray | None = None
    solves: np.ndarray | None = None
    balanced_skipped: np.ndarray | None = None
    last_mile: float | None = None
    total: float | None = None
    analytic: np.ndarray | None = None
    analytic_last_mile: float | None = None
    analytic_total: float | None = None
    theta_p: float | None = None

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else [float(v) for v in x]

        return {
            "p": self.p,
            "dimension": self.dimension,
            "depth": self.depth,
            "count": self.count,
            "mean_total": self.mean_total,
            "q": self.q,
            "levels": [int(v) for v in self.levels],
            "cells": [int(v) for v in self.cells],
            "good_event_failures": [int(v) for v in self.good_event_failures],
            "constructive_cost": arr(self.constructive),
            "raw_cost": arr(self.raw_cost),
            "quantization_slack": arr(self.quantization_slack),
            "solves": None if self.solves is None else [int(v) for v in self.solves],
            "balanced_skipped": None
            if self.balanced_skipped is None
            else [int(v) for v in self.balanced_skipped],
            "last_mile": self.last_mile,
            "total": self.total,
            "analytic_cost": arr(self.analytic),
            "analytic_last_mile": self.analytic_last_mile,
            "analytic_total": self.analytic_total,
            "theta_p": self.theta_p,
        }


def _subcell_layout(d: int, q: int, p: float):
    """Unit-cube positions, child map, and p-cost matrix for one square."""
    S = 1 << (d * q)
    if 2 * S > SUPPORT_CEILING:
        raise CeilingError(
            f"quantization offset q={q} needs {S}-atom squares in dimension {d}; reduce q"
        )
    side = 1 << q
    multi = np.stack(np.meshgrid(*([np.arange(side)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pos = (multi + 0.5) / side
    child_of = np.zeros(S, dtype=np.int64)
    for axis in range(d):
        child_of = child_of * 2 + (multi[:, axis] >> (q - 1))
    cost = distance_matrix(pos, pos) ** p
    return pos, child_of, cost


def _good_event_failures(ladder: InterpolationLadder, threshold: float) -> np.ndarray:
    out = np.zeros(ladder.depth, dtype=np.int64)
    for k in range(ladder.depth):
        out[k] = int(np.sum(ladder.counts[k] < threshold * ladder.mean_masses[k]))
    return out


def constructive_upper_bound(
    ladder: InterpolationLadder, p: float, q: int = 2, threshold: float = GOOD_EVENT_THRESHOLD
) -> ScaleCostReport:
    """Certified upper bound on W_p^p(mu_N, rescaled mean) via the ladder.

    Each level-k square's transport between consecutive restrictions is
    solved exactly on a level-(k+q) quantization. De-quantization slack is
    charged only to the plan mass that leaves its subcell (half-diagonal per
    unit mass at each endpoint): within a subcell the two restrictions are
    proportional, so resident mass transports identically at zero cost.
    Squares whose children all share the parent's count/mean ratio transport
    for free and are skipped.
    """
    if not (p >= 1):
        raise ValueError(f"order p must be >= 1, got {p}")
    if not (1 <= q <= 6):
        raise ValueError(f"quantization offset must be in [1, 6], got {q}")
    grid = ladder.grid
    d = grid.dimension
    K = ladder.depth
    _, child_of, unit_cost = _subcell_layout(d, q, p)
    S = len(child_of)
    uniform = ladder.density.kind == "uniform"

    levels = np.arange(K, dtype=np.int64)
    cells = np.array([grid.num_cells(k) for k in levels], dtype=np.int64)
    level_cost = np.zeros(K)
    level_raw = np.zeros(K)
    level_slack = np.zeros(K)
    solves = np.zeros(K, dtype=np.int64)
    skipped = np.zeros(K, dtype=np.int64)

    for k in range(K):
        parent_counts = ladder.counts[k]
        child_counts = _children_matrix(ladder.counts[k + 1], d)
        occupied = parent_counts > 0
        if uniform:
            balanced = np.all(child_counts * (1 << d) == parent_counts[:, None], axis=1)
        else:
            parent_ratio = ladder.ratios(k)
            child_ratio = _children_matrix(ladder.ratios(k + 1), d)
            balanced = np.all(
                np.abs(child_ratio - parent_ratio[:, None])
                <= 1e-12 * np.maximum(parent_ratio[:, None], 1e-300),
                axis=1,
            )
        todo = np.nonzero(occupied & ~balanced)[0]
        skipped[k] = int(np.sum(occupied & balanced))
        solves[k] = len(todo)
        if len(todo) == 0:
            continue

        cB = parent_counts[todo].astype(float)
        cc_sub = child_counts[todo][:, child_of].astype(float)
        if uniform:
            w_bar = np.full(S, 1.0 / S)
            a_batch = np.broadcast_to(w_bar, (len(todo), S)).copy()
            b_batch = cc_sub * ((1 << d) / S) / cB[:, None]
        else:
            mean_kq = ladder.density.cell_masses(k + q)
            parent_multi = grid.cell_multi_index(k, todo)
            sub_multi = np.stack(
                np.meshgrid(*([np.arange(1 << q)] * d), indexing="ij"), axis=-1
            ).reshape(-1, d)
            global_multi = parent_multi[:, None, :] * (1 << q) + sub_multi[None, :, :]
            m_kq = 1 << (k + q)
            flat = np.ravel_multi_index(
                np.moveaxis(global_multi, -1, 0), (m_kq,) * d
            )
            w = mean_kq[flat]
            meanB = ladder.mean_masses[k][todo]
            w_rows = w / meanB[:, None]
            child_means = _children_matrix(ladder.mean_masses[k + 1], d)
            cm_sub = child_means[todo][:, child_of]
            a_batch = w_rows
            b_batch = w_rows * (cc_sub / cm_sub) * (meanB / cB)[:, None]
        unit_costs, unit_diag = batched_transport_costs(
            np.ascontiguousarray(a_batch), np.ascontiguousarray(b_batch), unit_cost
        )
        if np.any(unit_costs < 0):
            raise NumericError(f"per-square solver failed at level {k}")
        s_k = grid.cell_side(k)
        costs = cB * (s_k**p) * unit_costs
        halfdiag = grid.cell_diameter(k + q) / 2.0
        # Both restrictions are proportional to the mean inside any level-(k+q)
        # subcell, so plan mass that stays in its subcell lifts to the identity
        # coupling; only the off-diagonal plan mass pays the half-diagonal
        # de-quantization toll, once per endpoint.
        moved = cB * np.maximum(0.0, 1.0 - unit_diag)
        offsets = 2.0 * halfdiag * moved ** (1.0 / p)
        bounded = (costs ** (1.0 / p) + offsets) ** p
        level_raw[k] = float(costs.sum())
        level_cost[k] = float(bounded.sum())
        level_slack[k] = level_cost[k] - level_raw[k]

    last_mile = grid.cell_diameter(K) ** p * ladder.count
    total = (np.sum(level_cost ** (1.0 / p)) + last_mile ** (1.0 / p)) ** p
    return ScaleCostReport(
        p=float(p),
        dimension=d,
        depth=K,
        count=ladder.count,
        mean_total=ladder.mean_total,
        levels=levels,
        cells=cells,
        good_event_failures=_good_event_failures(ladder, threshold),
        q=q,
        constructive=level_cost,
        raw_cost=level_raw,
        quantization_slack=level_slack,
        solves=solves,
        balanced_skipped=skipped,
        last_mile=float(last_mile),
        total=float(total),
    )


def alpha_constants(p: float, a: float, theta_p: float) -> tuple[float, float]:
    """Good-event constants (alpha_1, alpha_2) of the per-level estimate."""
    alpha_1 = theta_p * (0.5 * a) ** (1.0 - p) * 2.0 ** (p - 1.0) * a ** (-p) * (1.0 + 2.0**p)
    alpha_2 = 0.5 * 0.5 ** (-p) * a ** (-p)
    return alpha_1, alpha_2


def _require_monotone(envelope: MomentEnvelope):
    if envelope.form == "tabulated":
        if np.any(np.diff(envelope.values) > 1e-12 * np.maximum(envelope.values[:-1], 1e-300)):
            raise ValueError("analytic costs need a non-increasing envelope; tabulated values rise")


def analytic_scale_costs(
    ladder: InterpolationLadder,
    envelope: MomentEnvelope,
    p: float,
    a: float | None = None,
    A: float | None = None,
    theta_p: float = 1.0,
) -> ScaleCostReport:
    """Envelope-driven per-level bounds on E[W_p^p(nu_k, nu_(k+1))].

    Level k gets d^(p/2) * g(child volume)^p * (alpha_1 * int E^p + alpha_2 * E mass):
    the good-event split's two terms with the scale-free diam^p |B|^(-p/d)
    factor. Values scale with theta_p through alpha_1 and are reported next
    to, never mixed into, the constructive certificate.
    """
    if not (p >= 1):
        raise ValueError(f"order p must be >= 1, got {p}")
    _require_monotone(envelope)
    density = ladder.density
    a = density.a if a is None else a
    A = density.A if A is None else A
    if not (0 < a <= 1.0 <= A):
        raise ValueError(f"need 0 < a <= 1 <= A, got a={a}, A={A}")
    d = ladder.grid.dimension
    K = ladder.depth
    N = ladder.grid.cube.volume
    alpha_1, alpha_2 = alpha_constants(p, a, theta_p)
    lp_int = density.lp_integral(p)
    mean_mass = density.total_mass
    base = d ** (p / 2.0) * (alpha_1 * lp_int + alpha_2 * mean_mass)
    levels = np.arange(K, dtype=np.int64)
    child_vols = N / (float(1 << d)) ** (levels + 1.0)
    analytic = base * np.asarray(envelope.g(child_vols), dtype=float) ** p
    analytic_last = (2.0 * math.sqrt(d)) ** p * mean_mass
    if K > 0:
        analytic_total = (np.sum(analytic ** (1.0 / p)) + analytic_last ** (1.0 / p)) ** p
    else:
        analytic_total = analytic_last
    return ScaleCostReport(
        p=float(p),
        dimension=d,
        depth=K,
        count=ladder.count,
        mean_total=ladder.mean_total,
        levels=levels,
        cells=np.array([ladder.grid.num_cells(k) for k in levels], dtype=np.int64),
        good_event_failures=_good_event_failures(ladder, GOOD_EVENT_THRESHOLD),
        analytic=analytic,
        analytic_last_mile=float(analytic_last),
        analytic_total=float(analytic_total),
        theta_p=float(theta_p),
    )


def combine_reports(constructive: ScaleCostReport, analytic: ScaleCostReport) -> ScaleCostReport:
    """Merge a constructive and an analytic report over the same ladder."""
    if (
        constructive.depth != analytic.depth
        or constructive.count != analytic.count
        or constructive.p != analytic.p
    ):
        raise ValueError("reports describe different ladders")
    return ScaleCostReport(
        p=constructive.p,
        dimension=constructive.dimension,
        depth=constructive.depth,
        count=constructive.count,
        mean_total=constructive.mean_total,
        levels=constructive.levels,
        cells=constructive.cells,
        good_event_failures=constructive.good_event_failures,
        q=constructive.q,
        constructive=constructive.constructive,
        raw_cost=constructive.raw_cost,
        quantization_slack=constructive.quantization_slack,
        solves=constructive.solves,
        balanced_skipped=constructive.balanced_skipped,
        last_mile=constructive.last_mile,
        total=constructive.total,
        analytic=analytic.analytic,
        analytic_last_mile=analytic.analytic_last_mile,
        analytic_total=analytic.analytic_total,
        theta_p=analytic.theta_p,
    )


@dataclass(frozen=True)
class TheoremEnvelope:
    """The closed-form scaling bound C_p a^(1-2p) A^p N (1 + I)^p."""

    p: float
    a: float
    A: float
    N: float
    theta_p: float
    form: str
    integral: float
    c_p: float
    value: float


def theorem_bound(
    N: float, p: float, a: float, A: float, envelope: MomentEnvelope, theta_p: float = 1.0
) -> TheoremEnvelope:
    """Evaluate the headline envelope bound at population size N."""
    if not (N > 0):
        raise ValueError(f"N must be positive, got {N}")
    if not (0 < a <= 1.0 <= A):
        raise ValueError(f"need 0 < a <= 1 <= A, got a={a}, A={A}")
    if not (p >= 1):
        raise ValueError(f"order p must be >= 1, got {p}")
    I = envelope.integral(N)
    c_p = 2.0 ** (5.0 * p) * (1.0 + theta_p)
    value = c_p * a ** (1.0 - 2.0 * p) * A**p * N * (1.0 + I) ** p
    return TheoremEnvelope(
        p=float(p),
        a=float(a),
        A=float(A),
        N=float(N),
        theta_p=float(theta_p),
        form=envelope.form,
        integral=float(I),
        c_p=float(c_p),
        value=float(value),
    )


@dataclass(frozen=True)
class GoodEventReport:
    levels: np.ndarray
    cells: np.ndarray
    failures: np.ndarray
    frequencies: np.ndarray
    predictions: np.ndarray | None
    threshold: float


def good_event_diagnostics(
    ladder: InterpolationLadder,
    envelope: MomentEnvelope | None = None,
    p: float = 2.0,
    threshold: float = GOOD_EVENT_THRESHOLD,
) -> GoodEventReport:
    """Count per-level squares whose mass fell under threshold * mean.

    With an envelope, also report the Markov-type prediction
    min(1, threshold^-p * a^-p * |B|^(-p/d) * g(|B|)^p) per level.
    """
    if not (0.1 <= threshold <= 0.9):
        raise ValueError(f"good-event threshold must be in [0.1, 0.9], got {threshold}")
    K = ladder.depth
    levels = np.arange(K, dtype=np.int64)
    cells = np.array([ladder.grid.num_cells(k) for k in levels], dtype=np.int64)
    failures = _good_event_failures(ladder, threshold)
    freq = failures / np.maximum(cells, 1)
    predictions = None
    if envelope is not None:
        d = ladder.grid.dimension
        vols = np.array([ladder.grid.cell_volume(k) for k in levels])
        raw = (
            threshold ** (-p)
            * ladder.density.a ** (-p)
            * vols ** (-p / d)
            * np.asarray(envelope.g(vols), dtype=float) ** p
        )
        predictions = np.minimum(1.0, raw)
    return GoodEventReport(
        levels=levels,
        cells=cells,
        failures=failures,
        frequencies=freq,
        predictions=predictions,
        threshold=threshold,
    )
