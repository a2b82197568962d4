"""Point-process samplers, mean densities, and point-file IO.

Boundary policy for the perturbed lattice: under the euclidean metric a
perturbation that would push a point out of the cube is redrawn for that
point alone (the configuration stays a perturbed lattice, slightly biased
near the boundary); under the torus metric the point wraps around.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import rng_for
from .errors import CeilingError, ConfigError, IngestError, OutOfDomainError
from .geometry import EUCLIDEAN, TORUS, Cube, build_dyadic_grid

FAMILIES = ("poisson", "binomial_iid", "perturbed_lattice", "external_file")
PERTURBATIONS = ("uniform_box", "truncated_gaussian")

# Poisson sampling above this expected count is done block-by-block over a
# coarse grid so a single draw never asks for an enormous array at once.
_POISSON_BLOCK_MEAN = 1_000_000.0
_MAX_RESAMPLE_ROUNDS = 10_000


@dataclass(frozen=True, eq=False)
class PointSet:
    """Finite point configuration inside a half-open cube."""

    cube: Cube
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.cube.dimension)
        if pts.ndim != 2 or pts.shape[1] != self.cube.dimension:
            raise ValueError(
                f"points must have shape (n, {self.cube.dimension}), got {pts.shape}"
            )
        inside = self.cube.contains(pts) if len(pts) else np.ones(0, dtype=bool)
        if not np.all(inside):
            bad = int(np.argmin(inside))
            raise OutOfDomainError(
                f"point {bad} at {pts[bad]} lies outside the half-open cube"
            )
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class MeanDensity:
    """Mean measure with density bounded between a and A on the cube.

    kind "uniform": constant ``rate``. kind "piecewise": constant on each
    dyadic cell at ``level``, values given flat in row-major order.
    """

    cube: Cube
    a: float
    A: float
    kind: str = "uniform"
    rate: float = 1.0
    level: int = 0
    values: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 < self.a <= 1.0):
            raise ValueError(f"lower density bound a must be in (0, 1], got {self.a}")
        if not (self.A >= 1.0 and math.isfinite(self.A)):
            raise ValueError(f"upper density bound A must be >= 1, got {self.A}")
        if self.kind == "uniform":
            if not (self.a <= self.rate <= self.A):
                raise ValueError(
                    f"uniform rate {self.rate} violates declared bounds [{self.a}, {self.A}]"
                )
        elif self.kind == "piecewise":
            if self.values is None:
                raise ValueError("piecewise density needs cell values")
            vals = np.asarray(self.values, dtype=float).ravel()
            want = (1 << self.level) ** self.cube.dimension
            if len(vals) != want:
                raise ValueError(f"piecewise density needs {want} values, got {len(vals)}")
            if not np.all(np.isfinite(vals)):
                raise ValueError("piecewise density values must be finite")
            if vals.min() < self.a - 1e-12 or vals.max() > self.A + 1e-12:
                raise ValueError(
                    f"piecewise values in [{vals.min()}, {vals.max()}] violate "
                    f"declared bounds [{self.a}, {self.A}]"
                )
            object.__setattr__(self, "values", vals)
        else:
            raise ValueError(f"unknown density kind {self.kind!r}")

    @property
    def total_mass(self) -> float:
        if self.kind == "uniform":
            return self.rate * self.cube.volume
        cell_vol = (self.cube.side / (1 << self.level)) ** self.cube.dimension
        return float(self.values.sum() * cell_vol)

    def density_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "uniform":
            return np.full(len(pts), self.rate)
        grid = build_dyadic_grid(self.cube)
        idx = grid.cell_index(self.level, pts)
        return self.values[idx]

    def cell_masses(self, level: int) -> np.ndarray:
        """Exact mean mass of every dyadic cell at ``level``, flat row-major."""
        d = self.cube.dimension
        n_cells = (1 << level) ** d
        if n_cells > 2**26:
            raise CeilingError(f"cell_masses at level {level} needs {n_cells} cells")
        cell_vol = (self.cube.side / (1 << level)) ** d
        if self.kind == "uniform":
            return np.full(n_cells, self.rate * cell_vol)
        if level >= self.level:
            # Subdivide: children inherit the parent's constant density.
            reps = 1 << (level - self.level)
            m0 = 1 << self.level
            vals = self.values.reshape((m0,) * d)
            for axis in range(d):
                vals = np.repeat(vals, reps, axis=axis)
            return vals.ravel() * cell_vol
        # Aggregate fine cells up to the coarser level.
        masses = self.values * (self.cube.side / (1 << self.level)) ** d
        m_fine = 1 << self.level
        m = 1 << level
        f = m_fine // m
        arr = masses.reshape((m_fine,) * d)
        shape = ()
        for _ in range(d):
            shape += (m, f)
        arr = arr.reshape(shape)
        return arr.sum(axis=tuple(range(1, 2 * d, 2))).ravel()

    def lp_integral(self, p: float) -> float:
        """Integral of density^p over the cube."""
        if self.kind == "uniform":
            return self.rate**p * self.cube.volume
        cell_vol = (self.cube.side / (1 << self.level)) ** self.cube.dimension
        return float(np.sum(self.values**p) * cell_vol)


def uniform_mean(cube: Cube, rate: float = 1.0) -> MeanDensity:
    a = min(1.0, rate)
    A = max(1.0, rate)
    return MeanDensity(cube, a=a, A=A, kind="uniform", rate=rate)


@dataclass(frozen=True)
class ProcessSpec:
    """Declarative description of a point process to sample."""

    family: str
    intensity: float | None = None
    count: int | None = None
    perturbation: str = "uniform_box"
    radius: float = 0.25
    sigma: float | None = None
    path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown process family {self.family!r}")
        if self.family == "poisson":
            if self.intensity is None or not (self.intensity > 0):
                raise ConfigError("poisson needs a positive intensity")
        elif self.family == "binomial_iid":
            if self.count is None or self.count < 0:
                raise ConfigError("binomial_iid needs a nonnegative count")
        elif self.family == "perturbed_lattice":
            if self.perturbation not in PERTURBATIONS:
                raise ConfigError(f"unknown perturbation {self.perturbation!r}")
            if not (0.0 <= self.radius < 0.5):
                raise ConfigError(
                    f"perturbation radius must be in [0, 0.5), got {self.radius}"
                )
            if self.perturbation == "truncated_gaussian":
                if self.radius > 0 and (self.sigma is None or self.sigma <= 0):
                    raise ConfigError("truncated_gaussian needs a positive sigma")
        elif self.family == "external_file":
            if not self.path:
                raise ConfigError("external_file needs a path")


def _clip_to_cube(pts: np.ndarray, cube: Cube) -> np.ndarray:
    # u < 1 does not guarantee origin + u*side < origin + side after rounding;
    # nudge the rare offender back below the far face.
    hi = np.nextafter(cube.top, -np.inf)
    return np.clip(pts, cube.origin, hi)


def _uniform_points(rng: np.random.Generator, n: int, cube: Cube) -> np.ndarray:
    u = rng.random((n, cube.dimension))
    return _clip_to_cube(cube.origin + u * cube.side, cube)


def _sample_poisson(spec: ProcessSpec, cube: Cube, rng: np.random.Generator) -> np.ndarray:
    lam_total = spec.intensity * cube.volume
    if lam_total <= _POISSON_BLOCK_MEAN:
        n = int(rng.poisson(lam_total))
        return _uniform_points(rng, n, cube)
    # Split the cube into 2^(d*level) congruent blocks with manageable means.
    d = cube.dimension
    level = 0
    while lam_total / (1 << (d * level)) > _POISSON_BLOCK_MEAN:
        level += 1
    m = 1 << level
    block_side = cube.side / m
    lam_block = spec.intensity * block_side**d
    chunks = []
    for flat in range(m**d):
        multi = np.asarray(np.unravel_index(flat, (m,) * d))
        origin = cube.origin + multi * block_side
        n = int(rng.poisson(lam_block))
        if n:
            u = rng.random((n, d))
            chunks.append(origin + u * block_side)
    if not chunks:
        return np.zeros((0, d))
    return _clip_to_cube(np.concatenate(chunks, axis=0), cube)


def lattice_points_per_axis(side: float) -> int:
    """Number of unit-lattice centers k + 1/2 that fit in [0, side)."""
    m = math.ceil(side - 0.5)
    return max(m, int(side >= 0.5))


def _lattice_centers(cube: Cube) -> np.ndarray:
    m = lattice_points_per_axis(cube.side)
    if m < 1:
        raise ConfigError(f"cube side {cube.side} holds no lattice center")
    axis = np.arange(m) + 0.5  # centers in cube-local coordinates
    grids = np.meshgrid(*([axis] * cube.dimension), indexing="ij")
    local = np.stack([g.ravel() for g in grids], axis=1)
    return cube.origin + local


def _draw_perturbation(spec: ProcessSpec, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    R = spec.radius
    if R == 0.0 or n == 0:
        return np.zeros((n, d))
    if spec.perturbation == "uniform_box":
        return rng.uniform(-R, R, size=(n, d))
    # Truncated gaussian: redraw whole vectors whose sup-norm exceeds R.
    out = rng.normal(0.0, spec.sigma, size=(n, d))
    for _ in range(_MAX_RESAMPLE_ROUNDS):
        bad = np.max(np.abs(out), axis=1) > R
        if not bad.any():
            return out
        out[bad] = rng.normal(0.0, spec.sigma, size=(int(bad.sum()), d))
    raise ConfigError(
        f"truncated_gaussian rejection did not converge (sigma={spec.sigma}, R={R})"
    )


def _sample_perturbed_lattice(spec: ProcessSpec, cube: Cube, rng: np.random.Generator) -> np.ndarray:
    centers = _lattice_centers(cube)
    n, d = centers.shape
    pts = centers + _draw_perturbation(spec, rng, n, d)
    if cube.metric == TORUS:
        w = np.mod(pts - cube.origin, cube.side)
        w[w >= cube.side] -= cube.side  # mod can round up to the period
        return cube.origin + w
    # Euclidean: resample the perturbation for points that left the cube.
    for _ in range(_MAX_RESAMPLE_ROUNDS):
        inside = cube.contains(pts)
        if inside.all():
            return pts
        bad = ~inside
        pts[bad] = centers[bad] + _draw_perturbation(spec, rng, int(bad.sum()), d)
    raise ConfigError("boundary resampling did not converge; radius too large?")


def sample(spec: ProcessSpec, cube: Cube, replicate: int = 0) -> PointSet:
    """Draw one realization of the process on the cube.

    Independent (seed, replicate) pairs give independent streams; the same
    pair always reproduces the same configuration bit for bit.
    """
    if spec.family == "external_file":
        raise ConfigError("external_file points are loaded with ingest_points, not sampled")
    rng = rng_for(spec.seed, _FAMILY_STREAM[spec.family], replicate)
    if spec.family == "poisson":
        pts = _sample_poisson(spec, cube, rng)
    elif spec.family == "binomial_iid":
        pts = _uniform_points(rng, spec.count, cube)
    else:
        pts = _sample_perturbed_lattice(spec, cube, rng)
    return PointSet(cube, pts)


_FAMILY_STREAM = {"poisson": 1, "binomial_iid": 2, "perturbed_lattice": 3}


def mean_count(spec: ProcessSpec, cube: Cube) -> float:
    """E[number of points] for the process on the cube."""
    if spec.family == "poisson":
        return spec.intensity * cube.volume
    if spec.family == "binomial_iid":
        return float(spec.count)
    if spec.family == "perturbed_lattice":
        return float(lattice_points_per_axis(cube.side) ** cube.dimension)
    raise ConfigError("mean_count of external_file points is data, not model")


def mean_density_for(spec: ProcessSpec, cube: Cube) -> MeanDensity:
    """Uniform mean density whose total mass matches the process mean count."""
    rate = mean_count(spec, cube) / cube.volume
    return uniform_mean(cube, rate)


def restrict(ps: PointSet, sub: Cube) -> PointSet:
    """Points of ``ps`` that fall in ``sub`` (absolute coordinates kept)."""
    cube = ps.cube
    tol = 1e-12 * max(1.0, cube.side)
    if sub.dimension != cube.dimension:
        raise ValueError("sub-cube dimension differs from the parent cube")
    if np.any(sub.origin < cube.origin - tol) or np.any(sub.origin + sub.side > cube.top + tol):
        raise ValueError("sub-cube is not contained in the parent cube")
    mask = sub.contains(ps.points) if ps.count else np.ones(0, dtype=bool)
    return PointSet(sub, ps.points[mask])


# ---------------------------------------------------------------------------
# Point-file IO: CSV of coordinates, optional geometry header.

_HEADER_PREFIX = "# d="


def write_points(ps: PointSet, path: str):
    cube = ps.cube
    origin = ",".join(f"{v:.17g}" for v in cube.origin)
    with open(path, "w") as fh:
        fh.write(f"# d={cube.dimension} side={cube.side:.17g} origin={origin}\n")
        for row in ps.points:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _parse_header(line: str, lineno: int) -> dict:
    body = line.lstrip("#").strip()
    out = {}
    for token in body.split():
        if "=" not in token:
            raise IngestError(f"line {lineno}: malformed header token {token!r}")
        key, val = token.split("=", 1)
        out[key] = val
    try:
        d = int(out["d"])
        side = float(out["side"])
        origin = np.asarray([float(v) for v in out["origin"].split(",")], dtype=float)
    except (KeyError, ValueError) as exc:
        raise IngestError(f"line {lineno}: bad geometry header ({exc})") from exc
    return {"d": d, "side": side, "origin": origin}


def ingest_points(path: str, cube: Cube) -> PointSet:
    """Load a coordinate CSV, validating geometry and every row.

    Errors carry 1-based line numbers. A leading ``# d=.. side=.. origin=..``
    header, when present, must match the declared cube.
    """
    rows = []
    linenos = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith(_HEADER_PREFIX):
                    hdr = _parse_header(line, lineno)
                    if hdr["d"] != cube.dimension:
                        raise IngestError(
                            f"line {lineno}: header dimension {hdr['d']} != cube dimension {cube.dimension}"
                        )
                    if not math.isclose(hdr["side"], cube.side, rel_tol=1e-9):
                        raise IngestError(
                            f"line {lineno}: header side {hdr['side']} != cube side {cube.side}"
                        )
                    if len(hdr["origin"]) != cube.dimension or not np.allclose(
                        hdr["origin"], cube.origin, rtol=1e-9, atol=1e-9 * max(1.0, cube.side)
                    ):
                        raise IngestError(f"line {lineno}: header origin differs from cube origin")
                continue
            fields = line.split(",")
            if len(fields) != cube.dimension:
                raise IngestError(
                    f"line {lineno}: expected {cube.dimension} coordinates, got {len(fields)}"
                )
            try:
                rows.append([float(v) for v in fields])
            except ValueError as exc:
                raise IngestError(f"line {lineno}: {exc}") from exc
            linenos.append(lineno)
    pts = np.asarray(rows, dtype=float).reshape(len(rows), cube.dimension)
    inside = cube.contains(pts) if len(pts) else np.ones(0, dtype=bool)
    if not np.all(inside):
        bad = int(np.argmin(inside))
        raise IngestError(
            f"line {linenos[bad]}: point {bad} at {pts[bad]} lies outside the declared cube"
        )
    return PointSet(cube, pts)

def read_points(path: str, metric: str = EUCLIDEAN) -> PointSet:
    """Load a coordinate CSV whose geometry header declares the cube."""
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith(_HEADER_PREFIX):
                    hdr = _parse_header(line, lineno)
                    cube = Cube(hdr["d"], hdr["side"], hdr["origin"], metric)
                    return ingest_points(path, cube)
                continue
            break
    raise IngestError(f"{path}: no geometry header; build a Cube and use ingest_points")
