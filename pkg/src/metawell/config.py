"""Run-configuration parsing and validation.

Configurations are YAML (JSON is accepted, being a YAML subset). The schema
is documented in configs/reference.md; validation errors carry the offending
key path so the CLI can exit with an anchored message.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .grids import Grid
from .landscape import (
    BUILTIN_BOXES,
    GaussianWellsPotential,
    PolynomialPotential,
    builtin_potential,
    derivative_consistency,
)

DEFAULT_EPSILONS = (0.2, 0.1, 0.05, 0.025)


def _need(mapping, key, path):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"{path}: missing required key '{key}'")
    return mapping[key]


def _as_floats(value, path):
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a list of numbers") from None
    return out


def build_potential(spec, path="potential"):
    form = _need(spec, "form", path)
    if form == "builtin":
        name = _need(spec, "name", path)
        try:
            return builtin_potential(name, **{
                k: v for k, v in spec.items() if k in ("gamma",)
            })
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if form == "polynomial":
        dimension = int(_need(spec, "dimension", path))
        if dimension == 1 and "coefficients" in spec:
            coeffs = _as_floats(spec["coefficients"], f"{path}.coefficients")
            return PolynomialPotential.from_coefficients(coeffs)
        terms = _need(spec, "terms", path)
        parsed = []
        for k, term in enumerate(terms):
            exps = _need(term, "exponents", f"{path}.terms[{k}]")
            coef = _need(term, "coefficient", f"{path}.terms[{k}]")
            parsed.append((tuple(int(e) for e in exps), float(coef)))
        return PolynomialPotential(dimension, parsed)
    if form == "gaussian_wells":
        dimension = int(_need(spec, "dimension", path))
        wells = []
        for k, well in enumerate(_need(spec, "wells", path)):
            wells.append((
                _as_floats(_need(well, "center", f"{path}.wells[{k}]"),
                           f"{path}.wells[{k}].center"),
                float(_need(well, "amplitude", f"{path}.wells[{k}]")),
                float(_need(well, "width", f"{path}.wells[{k}]")),
            ))
        confining = build_potential(_need(spec, "confining", path),
                                    f"{path}.confining")
        return GaussianWellsPotential(dimension, wells, confining)
    raise ConfigError(f"{path}.form: unknown form {form!r}")


def build_field_spec(spec, path):
    """Scalar fields on the x interval: a number or a named form."""
    if spec is None:
        return 0.0
    if isinstance(spec, (int, float)):
        return float(spec)
    form = _need(spec, "form", path)
    if form == "constant":
        return float(_need(spec, "value", path))
    if form == "cosine":
        mean = float(_need(spec, "mean", path))
        amplitude = float(_need(spec, "amplitude", path))
        length = float(_need(spec, "length", path))
        return lambda x: mean + amplitude * np.cos(np.pi * x / length)
    if form == "sine_bump":
        base = float(_need(spec, "base", path))
        amplitude = float(_need(spec, "amplitude", path))
        length = float(_need(spec, "length", path))
        return lambda x: base + amplitude * np.sin(np.pi * x / length)
    raise ConfigError(f"{path}.form: unknown field form {form!r}")


@dataclass
class StageSettings:
    """Per-subcommand overrides of the sweep parameters."""

    epsilons: list = None
    eta: float = None
    b: list = None               # capacity boundary values
    c: list = None               # test-function source vector
    tail_level: float = None


@dataclass
class ScenarioConfig:
    a: object = 0.0
    alpha0: list = field(default_factory=list)
    T: float = 2.0
    dt: float = None
    output_times: list = field(default_factory=lambda: [0.25, 0.5, 1.0, 1.5, 2.0])


@dataclass
class RunConfig:
    potential: object
    potential_spec: dict
    grid: Grid
    epsilons: list
    eta: float
    seed_spacing: float
    grid_x: Grid
    scenario: ScenarioConfig
    stages: dict                 # name -> StageSettings
    config_hash: str
    raw: dict

    def stage(self, name):
        return self.stages.get(name, StageSettings())

    def stage_epsilons(self, name):
        eps = self.stage(name).epsilons
        return list(eps) if eps is not None else list(self.epsilons)

    def stage_eta(self, name):
        eta = self.stage(name).eta
        return eta if eta is not None else self.eta


def load_config(path):
    try:
        with open(path, "rb") as handle:
            raw_bytes = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    try:
        raw = yaml.safe_load(raw_bytes)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    digest = hashlib.sha256(raw_bytes).hexdigest()
    return parse_config(raw, digest)


def parse_config(raw, digest=""):
    potential_spec = _need(raw, "potential", "config")
    potential = build_potential(potential_spec)

    box_spec = raw.get("xi_box")
    if box_spec is None:
        if potential_spec.get("form") == "builtin":
            lo, hi = BUILTIN_BOXES[potential_spec["name"]]
        else:
            raise ConfigError("xi_box: required for non-builtin potentials")
        cells = raw.get("xi_cells", [160] * len(lo))
    else:
        lo = _as_floats(_need(box_spec, "lo", "xi_box"), "xi_box.lo")
        hi = _as_floats(_need(box_spec, "hi", "xi_box"), "xi_box.hi")
        cells = box_spec.get("cells", [160] * len(lo))
    if isinstance(cells, (int, float)):
        cells = [int(cells)] * len(lo)
    cells = [int(c) for c in cells]
    if len(lo) != potential.dimension or len(hi) != potential.dimension:
        raise ConfigError("xi_box: dimension mismatch with the potential")
    if any(c <= 1 for c in cells):
        raise ConfigError("xi_box.cells: need at least 2 cells per axis")
    try:
        grid = Grid(tuple(lo), tuple(hi), tuple(cells))
    except ValueError as exc:
        raise ConfigError(f"xi_box: {exc}") from None

    epsilons = _as_floats(raw.get("epsilons", DEFAULT_EPSILONS), "epsilons")
    if not epsilons:
        raise ConfigError("epsilons: list must not be empty")
    if any(e <= 0 for e in epsilons):
        raise ConfigError("epsilons: all entries must be positive")
    if any(a <= b for a, b in zip(epsilons, epsilons[1:])):
        raise ConfigError("epsilons: list must be strictly decreasing")
    limit = float(np.sqrt(min(epsilons)) / 4.0)
    if max(grid.spacing) > limit * (1 + 1e-12):
        raise ConfigError(
            f"xi_box: grid spacing {max(grid.spacing):.6g} exceeds "
            f"sqrt(min epsilon)/4 = {limit:.6g}"
        )

    eta = raw.get("eta")
    if eta is not None:
        eta = float(eta)
        if eta <= 0:
            raise ConfigError("eta: must be positive when given")

    seed_spacing = raw.get("seed_spacing")
    if seed_spacing is not None:
        seed_spacing = float(seed_spacing)
        if seed_spacing <= 0:
            raise ConfigError("seed_spacing: must be positive")

    grid_x = None
    xspec = raw.get("x_domain")
    if xspec is not None:
        length = float(_need(xspec, "length", "x_domain"))
        nx = int(_need(xspec, "cells", "x_domain"))
        if length <= 0 or nx < 2:
            raise ConfigError("x_domain: need positive length and >= 2 cells")
        grid_x = Grid((0.0,), (length,), (nx,))

    scen_raw = raw.get("scenario", {}) or {}
    scenario = ScenarioConfig()
    scenario.a = build_field_spec(scen_raw.get("a", 0.0), "scenario.a")
    alpha0_raw = scen_raw.get("alpha0", [])
    scenario.alpha0 = [
        build_field_spec(v, f"scenario.alpha0[{k}]")
        for k, v in enumerate(alpha0_raw)
    ]
    scenario.T = float(scen_raw.get("T", 2.0))
    if scenario.T <= 0:
        raise ConfigError("scenario.T: must be positive")
    if scen_raw.get("dt") is not None:
        scenario.dt = float(scen_raw["dt"])
        if scenario.dt <= 0:
            raise ConfigError("scenario.dt: must be positive")
    times = _as_floats(scen_raw.get("output_times", scenario.output_times),
                       "scenario.output_times")
    if any(t <= 0 or t > scenario.T for t in times):
        raise ConfigError("scenario.output_times: entries must lie in (0, T]")
    if any(s >= t for s, t in zip(times, times[1:])):
        raise ConfigError("scenario.output_times: must be increasing")
    scenario.output_times = times

    stages = {}
    for name in ("asymptotics", "capacity", "testfn", "evolve"):
        block = raw.get(name)
        if block is None:
            continue
        settings = StageSettings()
        if "epsilons" in block:
            eps = _as_floats(block["epsilons"], f"{name}.epsilons")
            if any(e <= 0 for e in eps):
                raise ConfigError(f"{name}.epsilons: must be positive")
            if any(x <= y for x, y in zip(eps, eps[1:])):
                raise ConfigError(f"{name}.epsilons: must be strictly decreasing")
            if max(grid.spacing) > float(np.sqrt(min(eps)) / 4.0) * (1 + 1e-12):
                raise ConfigError(
                    f"{name}.epsilons: grid too coarse for min epsilon"
                )
            settings.epsilons = eps
        if "eta" in block and block["eta"] is not None:
            settings.eta = float(block["eta"])
        if "b" in block:
            settings.b = _as_floats(block["b"], f"{name}.b")
        if "c" in block:
            settings.c = _as_floats(block["c"], f"{name}.c")
        if "tail_level" in block and block["tail_level"] is not None:
            settings.tail_level = float(block["tail_level"])
        stages[name] = settings

    # the closed-form evaluators must agree with finite differences of Phi
    rng = np.random.default_rng(0)
    pts = [
        np.array([grid.lo[k] + rng.random() * (grid.hi[k] - grid.lo[k])
                  for k in range(grid.ndim)])
        for _ in range(8)
    ]
    mismatch = derivative_consistency(potential, pts, 1e-4 * grid.extent)
    if mismatch > 1e-6:
        raise ConfigError(
            f"potential: gradient/Hessian disagree with finite differences "
            f"(relative error {mismatch:.2e} > 1e-6)"
        )

    return RunConfig(
        potential=potential,
        potential_spec=potential_spec,
        grid=grid,
        epsilons=epsilons,
        eta=eta,
        seed_spacing=seed_spacing,
        grid_x=grid_x,
        scenario=scenario,
        stages=stages,
        config_hash=digest,
        raw=raw,
    )
