"""Experiment configuration: INI-style files with strict key checking."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import EUCLIDEAN, TORUS
from .processes import FAMILIES, PERTURBATIONS, ProcessSpec

_PROCESS_KEYS = {"family", "intensity", "count", "perturbation", "radius", "sigma", "path"}
_EXPERIMENT_KEYS = {
    "dimension",
    "metric",
    "n_values",
    "p_values",
    "replicates",
    "seed",
    "window_areas",
    "moment_replicates",
    "moment_windows",
    "envelope_form",
    "q",
    "theta_p",
    "good_event_threshold",
    "semidiscrete_level",
    "density_lower",
    "density_upper",
}
_OUTPUT_KEYS = {"directory", "svg", "results_csv", "report_json", "svg_name"}
_SECTIONS = {"process": _PROCESS_KEYS, "experiment": _EXPERIMENT_KEYS, "output": _OUTPUT_KEYS}


@dataclass
class ExperimentConfig:
    """Everything a batch run needs; flags may override single fields."""

    family: str = "binomial_iid"
    intensity: float | None = None
    count: int | None = None
    perturbation: str = "uniform_box"
    radius: float = 0.25
    sigma: float | None = None
    path: str | None = None

    dimension: int = 2
    metric: str = EUCLIDEAN
    n_values: tuple = (64, 256, 1024, 4096)
    p_values: tuple = (2.0,)
    replicates: int = 10
    seed: int = 0
    window_areas: tuple | None = None
    moment_replicates: int = 8
    moment_windows: int = 64
    envelope_form: str = "power"
    q: int = 2
    theta_p: float = 1.0
    good_event_threshold: float = 0.5
    semidiscrete_level: int | None = None
    density_lower: float | None = None
    density_upper: float | None = None

    directory: str = "."
    svg: bool = True
    results_csv: str = "results.csv"
    report_json: str = "report.json"
    svg_name: str = "scaling.svg"

    def validate(self, scaling: bool = False):
        if self.family not in FAMILIES:
            raise ConfigError(f"process.family: unknown family {self.family!r}")
        if self.perturbation not in PERTURBATIONS:
            raise ConfigError(f"process.perturbation: unknown kind {self.perturbation!r}")
        if self.metric not in (EUCLIDEAN, TORUS):
            raise ConfigError(f"experiment.metric: must be euclidean or torus")
        if not (1 <= self.dimension <= 8):
            raise ConfigError(f"experiment.dimension: must be in [1, 8], got {self.dimension}")
        ns = tuple(float(v) for v in self.n_values)
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("experiment.n_values: must be strictly increasing")
        if any(v <= 0 for v in ns):
            raise ConfigError("experiment.n_values: must be positive")
        if not self.p_values:
            raise ConfigError("experiment.p_values: need at least one order")
        if any(p < 1 for p in self.p_values):
            raise ConfigError("experiment.p_values: orders must be >= 1")
        if self.replicates < 1:
            raise ConfigError("experiment.replicates: must be >= 1")
        if scaling:
            if len(ns) < 3:
                raise ConfigError("experiment.n_values: scaling runs need >= 3 sizes")
            if self.replicates < 10:
                raise ConfigError("experiment.replicates: scaling runs need >= 10 replicates")
            if self.family == "external_file":
                raise ConfigError("process.family: scaling needs a resampleable family")
        if not (1 <= self.q <= 6):
            raise ConfigError(f"experiment.q: quantization offset must be in [1, 6], got {self.q}")
        if not (0.1 <= self.good_event_threshold <= 0.9):
            raise ConfigError("experiment.good_event_threshold: must be in [0.1, 0.9]")
        if self.theta_p < 0:
            raise ConfigError("experiment.theta_p: must be nonnegative")
        return self

    def process_spec(self, n: float | None = None) -> ProcessSpec:
        """Spec for one run; for generative families n sets the scale."""
        family = self.family
        intensity = self.intensity
        count = self.count
        if family == "poisson" and intensity is None:
            intensity = 1.0
        if family == "binomial_iid" and n is not None:
            count = int(round(n))
        if family == "binomial_iid" and count is None:
            raise ConfigError("process.count: binomial_iid needs a count (or an n to derive it)")
        return ProcessSpec(
            family=family,
            intensity=intensity,
            count=count,
            perturbation=self.perturbation,
            radius=self.radius,
            sigma=self.sigma,
            path=self.path,
            seed=self.seed,
        )

    def default_window_areas(self, n_max: float) -> tuple:
        if self.window_areas is not None:
            return self.window_areas
        top = max(4.0, n_max / 4.0)
        areas = []
        y = 1.0
        while y <= top and len(areas) < 12:
            areas.append(y)
            y *= 2.0
        return tuple(areas)


def _parse_list(raw: str, caster, where: str):
    out = []
    for tok in raw.replace(";", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(caster(tok))
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value {tok!r} ({exc})") from exc
    if not out:
        raise ConfigError(f"{where}: empty list")
    return tuple(out)


def _parse_bool(raw: str, where: str) -> bool:
    val = raw.strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def load_config(path: str) -> ExperimentConfig:
    """Parse an INI config; unknown sections or keys are hard errors."""
    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        allowed = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"{path}: unknown key {section}.{key}")
            _apply(cfg, section, key, raw)
    return cfg


def _apply(cfg: ExperimentConfig, section: str, key: str, raw: str):
    where = f"{section}.{key}"
    raw = raw.strip()
    try:
        if key in ("intensity", "radius", "sigma", "theta_p", "good_event_threshold",
                   "density_lower", "density_upper"):
            setattr(cfg, key, float(raw))
        elif key in ("count", "dimension", "replicates", "seed", "moment_replicates",
                     "moment_windows", "q", "semidiscrete_level"):
            setattr(cfg, key, int(raw))
        elif key == "n_values":
            cfg.n_values = _parse_list(raw, float, where)
        elif key == "p_values":
            cfg.p_values = _parse_list(raw, float, where)
        elif key == "window_areas":
            cfg.window_areas = _parse_list(raw, float, where)
        elif key == "svg":
            cfg.svg = _parse_bool(raw, where)
        else:
            setattr(cfg, key, raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for name in cfg.__dataclass_fields__:
        val = getattr(cfg, name)
        if isinstance(val, tuple):
            val = list(val)
        out[name] = val
    return out
