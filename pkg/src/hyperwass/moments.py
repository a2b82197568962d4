"""Window-count moments, fluctuation envelopes, and variance classification.

The central object is the moment curve s -> E|count(B_s) - mean(B_s)|^p over
a ladder of window areas, estimated with windows centered by the analytic
mean (never the empirical one). Envelopes fitted to such curves feed the
multiscale machinery: the fluctuation hypothesis used there reads

    E|mu(B) - E mu(B)|^p <= |B|^(p(d-1)/d) * g(|B|)^p

so the data is reduced to g-space before fitting, and the fitted form is
inflated until it dominates every observed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from ._rng import rng_for
from .errors import ConfigError, NumericError
from .geometry import Cube
from .processes import PointSet, ProcessSpec, mean_count, sample

PLACEMENTS = ("stratified", "aligned")
_WINDOW_STREAM = 11


@dataclass(frozen=True, eq=False)
class MomentCurve:
    """Empirical centered absolute moments over a ladder of window areas."""

    p: float
    dimension: int
    areas: np.ndarray
    moments: np.ndarray
    stderrs: np.ndarray
    replicates: int
    windows: int

    def __post_init__(self):
        areas = np.asarray(self.areas, dtype=float)
        if np.any(np.diff(areas) <= 0):
            raise ValueError("window areas must be strictly increasing")
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "moments", np.asarray(self.moments, dtype=float))
        object.__setattr__(self, "stderrs", np.asarray(self.stderrs, dtype=float))

    def to_csv(self, path: str):
        with open(path, "w") as fh:
            fh.write("area,moment,stderr,replicates\n")
            for y, m, s in zip(self.areas, self.moments, self.stderrs):
                fh.write(f"{y:.17g},{m:.17g},{s:.17g},{self.replicates}\n")


def _window_anchors(
    cube: Cube, window_side: float, windows: int, placement: str, rng: np.random.Generator
) -> np.ndarray:
    d = cube.dimension
    extent = cube.side - window_side
    if extent < 0:
        raise ValueError(f"window side {window_side} exceeds cube side {cube.side}")
    per_axis = max(1, math.ceil(windows ** (1.0 / d)))
    if placement == "stratified":
        if extent == 0:
            return cube.origin[None, :].copy()
        stratum = extent / per_axis
        base = np.stack(
            np.meshgrid(*([np.arange(per_axis)] * d), indexing="ij"), axis=-1
        ).reshape(-1, d)
        jitter = rng.random(base.shape)
        anchors = cube.origin + (base + jitter) * stratum
    elif placement == "aligned":
        max_off = int(math.floor(extent))
        offs = np.unique(np.round(np.linspace(0, max_off, per_axis)).astype(int))
        base = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
        anchors = cube.origin + base.astype(float)
    else:
        raise ConfigError(f"unknown window placement {placement!r}")
    return anchors[:windows] if len(anchors) > windows else anchors


def _window_counts(points: np.ndarray, anchors: np.ndarray, window_side: float) -> np.ndarray:
    counts = np.empty(len(anchors), dtype=np.int64)
    chunk = 16
    for lo in range(0, len(anchors), chunk):
        anc = anchors[lo : lo + chunk]
        if len(points) == 0:
            counts[lo : lo + len(anc)] = 0
            continue
        inside = np.all(
            (points[None, :, :] >= anc[:, None, :])
            & (points[None, :, :] < anc[:, None, :] + window_side),
            axis=2,
        )
        counts[lo : lo + len(anc)] = inside.sum(axis=1)
    return counts


def estimate_moment_curve(
    spec: ProcessSpec,
    cube: Cube,
    p: float,
    areas,
    replicates: int = 16,
    windows: int = 64,
    placement: str = "stratified",
) -> MomentCurve:
    """Monte Carlo moment curve for a process on a cube.

    Each replicate draws a fresh configuration and a fresh window layout;
    the estimate averages window means across replicates and reports the
    between-replicate standard error.
    """
    if replicates < 2:
        raise ValueError(f"need at least 2 replicates to report a standard error, got {replicates}")
    areas = np.asarray(list(areas), dtype=float)
    if np.any(areas < 1.0):
        raise ValueError("window areas below 1 are outside the calibrated regime")
    if np.any(areas > cube.volume):
        raise ValueError("window area exceeds the cube volume")
    rate = mean_count(spec, cube) / cube.volume
    d = cube.dimension
    per_rep = np.empty((replicates, len(areas)))
    for r in range(replicates):
        ps = sample(spec, cube, replicate=r)
        wrng = rng_for(spec.seed, _WINDOW_STREAM, r)
        for ai, area in enumerate(areas):
            w_side = area ** (1.0 / d)
            anchors = _window_anchors(cube, w_side, windows, placement, wrng)
            counts = _window_counts(ps.points, anchors, w_side)
            dev = np.abs(counts - rate * area)
            per_rep[r, ai] = np.mean(dev**p)
    moments = per_rep.mean(axis=0)
    stderrs = per_rep.std(axis=0, ddof=1) / math.sqrt(replicates)
    return MomentCurve(
        p=float(p),
        dimension=d,
        areas=areas,
        moments=moments,
        stderrs=stderrs,
        replicates=replicates,
        windows=windows,
    )


# ---------------------------------------------------------------------------
# Envelopes

ENVELOPE_FORMS = ("constant", "power", "log_power", "tabulated")


@dataclass(frozen=True, eq=False)
class MomentEnvelope:
    """Dominating envelope g for window-count fluctuations.

    Forms: constant g=gamma; power g=gamma*y^(-epsilon/2);
    log_power g=gamma*(1+ln y)^(-r); tabulated right-continuous steps.
    """

    p: float
    dimension: int
    form: str
    gamma: float
    epsilon: float = 0.0
    r: float = 0.0
    knots: np.ndarray | None = None
    values: np.ndarray | None = None
    degenerate: bool = False

    def __post_init__(self):
        if self.form not in ENVELOPE_FORMS:
            raise ValueError(f"unknown envelope form {self.form!r}")
        if self.gamma < 0 or self.epsilon < 0 or self.r < 0:
            raise ValueError("envelope parameters must be nonnegative")
        if self.form == "tabulated":
            if self.knots is None or self.values is None:
                raise ValueError("tabulated envelope needs knots and values")
            object.__setattr__(self, "knots", np.asarray(self.knots, dtype=float))
            object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def g(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.form == "constant":
            return np.full_like(y, self.gamma)
        if self.form == "power":
            return self.gamma * y ** (-self.epsilon / 2.0)
        if self.form == "log_power":
            return self.gamma * (1.0 + np.log(y)) ** (-self.r)
        idx = np.clip(np.searchsorted(self.knots, y, side="right") - 1, 0, len(self.knots) - 1)
        return self.values[idx]

    def integral(self, N: float) -> float:
        """Closed-form integral of g(y)/y over [1, max(1, N)]."""
        N = max(1.0, float(N))
        L = math.log(N)
        if self.form == "constant":
            return self.gamma * L
        if self.form == "power":
            if self.epsilon == 0.0:
                return self.gamma * L
            return self.gamma * (2.0 / self.epsilon) * (1.0 - N ** (-self.epsilon / 2.0))
        if self.form == "log_power":
            if self.r == 1.0:
                return self.gamma * math.log1p(L)
            return self.gamma * (((1.0 + L) ** (1.0 - self.r)) - 1.0) / (1.0 - self.r)
        # tabulated: piecewise-constant in y, exact in log space
        edges = np.concatenate([[1.0], np.clip(self.knots, 1.0, N), [N]])
        edges = np.unique(edges)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi <= lo:
                continue
            mid = math.sqrt(lo * hi)
            total += float(self.g(mid)) * (math.log(hi) - math.log(lo))
        return total


def _g_space(curve: MomentCurve) -> np.ndarray:
    d = curve.dimension
    p = curve.p
    base = curve.areas ** (p * (d - 1) / d)
    return np.where(curve.moments > 0, (curve.moments / base) ** (1.0 / p), 0.0)


def fit_envelope(curve: MomentCurve, form: str = "power") -> MomentEnvelope:
    """Fit an envelope of the requested form and inflate it to dominate.

    Least squares runs in log space on the g-transformed curve; the fitted
    gamma is then scaled up so g dominates every observed point. An all-zero
    curve degenerates to the zero constant envelope.
    """
    gdata = _g_space(curve)
    y = curve.areas
    if np.max(gdata) == 0.0:
        return MomentEnvelope(
            p=curve.p, dimension=curve.dimension, form="constant", gamma=0.0, degenerate=True
        )
    if form == "tabulated":
        return MomentEnvelope(
            p=curve.p,
            dimension=curve.dimension,
            form="tabulated",
            gamma=float(np.max(gdata)),
            knots=y.copy(),
            values=gdata.copy(),
        )
    pos = gdata > 0
    ly = np.log(y[pos])
    lg = np.log(gdata[pos])
    if form == "constant" or pos.sum() < 2:
        gamma = float(np.max(gdata))
        return MomentEnvelope(p=curve.p, dimension=curve.dimension, form="constant", gamma=gamma)
    if form == "power":
        slope, intercept = np.polyfit(ly, lg, 1)
        eps = max(0.0, -2.0 * slope)
        gamma = math.exp(intercept) if eps > 0 else float(np.exp(lg.mean()))
        env = MomentEnvelope(
            p=curve.p, dimension=curve.dimension, form="power", gamma=gamma, epsilon=eps
        )
    elif form == "log_power":
        basis = np.log(1.0 + ly)
        slope, intercept = np.polyfit(basis, lg, 1)
        r = max(0.0, -slope)
        gamma = math.exp(intercept) if r > 0 else float(np.exp(lg.mean()))
        env = MomentEnvelope(p=curve.p, dimension=curve.dimension, form="log_power", gamma=gamma, r=r)
    else:
        raise ValueError(f"unknown envelope form {form!r}")
    fitted = env.g(y[pos])
    inflate = float(np.max(gdata[pos] / fitted))
    if inflate > 1.0:
        env = MomentEnvelope(
            p=curve.p,
            dimension=curve.dimension,
            form=env.form,
            gamma=env.gamma * inflate,
            epsilon=env.epsilon,
            r=env.r,
        )
    return env


# ---------------------------------------------------------------------------
# Variance-decay classification (planar configurations)

CLASSES = ("type_I", "type_II", "type_III", "not_hyperuniform", "inconclusive")


@dataclass(frozen=True)
class VarianceClassification:
    beta: float
    beta_se: float
    ci: tuple[float, float]
    classification: str
    log_factor_detected: bool
    rss_plain: float
    rss_log: float
    degenerate: bool = False
    caveat: str = "square windows; slope from weighted log-log regression"


def classify_hyperuniformity(curve: MomentCurve) -> VarianceClassification:
    """Classify variance decay from a p=2 moment curve on the plane.

    Thresholds (0.55, 0.95) on the area exponent are calibrated for d=2,
    where surface scaling means Var ~ area^(1/2); the curve must span at
    least two decades of areas. Confidence intervals straddling a threshold
    yield "inconclusive".
    """
    if curve.p != 2:
        raise ValueError("classification needs the p=2 (variance) curve")
    if curve.dimension != 2:
        raise ValueError("classification thresholds are calibrated for planar configurations")
    if curve.areas.max() / curve.areas.min() < 100.0:
        raise ValueError("moment curve must span at least two decades of window areas")
    if np.max(curve.moments) == 0.0:
        return VarianceClassification(
            beta=0.0,
            beta_se=0.0,
            ci=(0.0, 0.0),
            classification="type_I",
            log_factor_detected=False,
            rss_plain=0.0,
            rss_log=0.0,
            degenerate=True,
        )
    pos = curve.moments > 0
    y = curve.areas[pos]
    m = curve.moments[pos]
    se = curve.stderrs[pos]
    if pos.sum() < 3:
        raise ValueError("too few nonzero moments to fit a slope")
    ln_y = np.log(y)
    ln_m = np.log(m)
    se_ln = np.maximum(se / m, 1e-9)
    w = 1.0 / se_ln**2
    beta, alpha, beta_se = _wls_line(ln_y, ln_m, w)
    ci = (beta - 1.96 * beta_se, beta + 1.96 * beta_se)

    # One-parameter surface models, with and without a logarithmic factor.
    basis_plain = np.sqrt(y)
    basis_log = np.sqrt(y) * np.log1p(np.sqrt(y))
    rss_plain = _log_rss(ln_m, basis_plain, w)
    rss_log = _log_rss(ln_m, basis_log, w)
    log_detected = rss_log < rss_plain

    for threshold in (0.55, 0.95):
        if ci[0] < threshold < ci[1]:
            return VarianceClassification(
                beta=beta,
                beta_se=beta_se,
                ci=ci,
                classification="inconclusive",
                log_factor_detected=log_detected,
                rss_plain=rss_plain,
                rss_log=rss_log,
            )
    if beta <= 0.55:
        cls = "type_II" if log_detected else "type_I"
    elif beta < 0.95:
        cls = "type_III"
    else:
        cls = "not_hyperuniform"
    return VarianceClassification(
        beta=beta,
        beta_se=beta_se,
        ci=ci,
        classification=cls,
        log_factor_detected=log_detected,
        rss_plain=rss_plain,
        rss_log=rss_log,
    )


def _wls_line(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Weighted least squares line y = a + b x; returns (b, a, se_b)."""
    W = w.sum()
    xb = (w * x).sum() / W
    yb = (w * y).sum() / W
    sxx = (w * (x - xb) ** 2).sum()
    if sxx <= 0:
        raise NumericError("degenerate abscissae in slope fit")
    b = (w * (x - xb) * (y - yb)).sum() / sxx
    a = yb - b * xb
    resid = y - (a + b * x)
    dof = max(len(x) - 2, 1)
    scale = (w * resid**2).sum() / dof
    se_b = math.sqrt(scale / sxx)
    return float(b), float(a), float(se_b)


def _log_rss(ln_m: np.ndarray, basis: np.ndarray, w: np.ndarray) -> float:
    ok = basis > 0
    if ok.sum() == 0:
        return float("inf")
    lb = np.log(basis[ok])
    c = ((ln_m[ok] - lb) * w[ok]).sum() / w[ok].sum()
    resid = ln_m[ok] - (c + lb)
    return float((w[ok] * resid**2).sum())


# ---------------------------------------------------------------------------
# Sub-gaussian/sub-exponential count moments from a variance bound

@lru_cache(maxsize=None)
def gamma_p(p: float) -> float:
    """Moment constant 2^(p+1) * max of the gaussian and exponential tails."""
    if not (p >= 1):
        raise ValueError(f"order p must be >= 1, got {p}")
    i_gauss, err1 = integrate.quad(lambda u: p * u ** (p - 1) * math.exp(-(u**2)), 0, np.inf)
    i_exp, err2 = integrate.quad(lambda t: p * t ** (p - 1) * math.exp(-0.75 * t), 0, np.inf)
    if max(err1, err2) > 1e-7 * max(i_gauss, i_exp):
        raise NumericError("tail-moment quadrature did not converge")
    return 2.0 ** (p + 1) * max(i_gauss, i_exp)


def bernstein_moment_bound(variance: float, p: float) -> float:
    """Upper bound on E|count - mean|^p given a variance bound."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    return gamma_p(p) * (variance ** (p / 2.0) + 1.0)


def bernstein_tail(variance: float, t: float, cap: bool = True) -> float:
    """Two-sided count-deviation tail bound; capped at 1 unless cap=False."""
    if variance < 0 or t < 0:
        raise ValueError("variance and threshold must be nonnegative")
    if t == 0:
        return 1.0 if cap else 2.0
    val = 2.0 * math.exp(-(t**2) / (2.0 * variance + t / 3.0))
    return min(1.0, val) if cap else val
