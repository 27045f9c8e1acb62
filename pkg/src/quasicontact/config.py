"""Experiment configuration: YAML blocks, dataclasses and cross-field checks.

A config file has five top-level keys::

    name: warmup
    experiment: compare            # stationary | cauchy | simulate | compare
    model:      {dim, box, kappa, alpha, markspace, Q, c}
    solver:     {n_points, n_max, tol, representation, dt, horizon, initial, ...}
    simulation: {seed, horizon, burn_in, replicas, batches, cap, bin_width, ...}
    compare:    {sigma, bonferroni, k2_r_max, kappa_sim_override}

``kappa`` and ``Q`` are given as written by the modeller; renormalisation to
a kernel with principal eigenvalue 1 happens in :meth:`ExperimentConfig.model_for_solver`.
"""

from __future__ import annotations

import copy
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import dispersal
from .hierarchy import Model, TorusGrid
from .markspace import CRITICAL_MARGIN, MarkSpace, MutationKernel, krein_rutman
from .simulator import SimParams

EXPERIMENTS = ("stationary", "cauchy", "simulate", "compare")
REPRESENTATIONS = ("difference", "full")
INITIAL_KINDS = ("zero", "constant", "file", "stationary")
# the torus must be this many dispersal standard deviations wide
MIN_BOX_LENGTHS = 20.0


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot, e.g. ``1e-12``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*)?(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"""),
    list("-+0123456789."))


class ConfigError(ValueError):
    """One or more invalid fields; ``errors`` holds (field path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.errors))


@dataclass
class ModelConfig:
    dim: int
    box: float
    kappa: float
    alpha: dict
    Q: list
    c: list
    markspace: dict = field(default_factory=lambda: {"labels": [0], "weights": [1.0]})


@dataclass
class SolverConfig:
    n_points: int = 64
    n_max: int = 2
    tol: float = 1e-12
    representation: str = "difference"
    dt: float | None = None
    horizon: float = 40.0
    initial: dict = field(default_factory=lambda: {"kind": "zero"})
    record_every: int | None = None
    factorization_radii: list | None = None
    strict_aliasing: bool = False
    memory_budget: float = 2e9


@dataclass
class SimulationConfig:
    seed: int = 0
    horizon: float = 200.0
    burn_in: float = 20.0
    replicas: int = 8
    batches: int = 4
    cap: int = 1_000_000
    bin_width: float | None = None
    initial_density: list | None = None


@dataclass
class CompareConfig:
    sigma: float = 3.0
    bonferroni: bool = True
    k2_r_max: float | None = None
    # test mode only: run the simulator at a different kappa (negative control)
    kappa_sim_override: float | None = None


@dataclass
class ExperimentConfig:
    name: str
    experiment: str
    model: ModelConfig
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)

    # ---- construction -------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict, validate: bool = True) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError([("<root>", "config must be a mapping")])
        errors = []
        blocks = {}
        for key, kind in (("model", ModelConfig), ("solver", SolverConfig),
                          ("simulation", SimulationConfig), ("compare", CompareConfig)):
            block = raw.get(key, {} if key != "model" else None)
            if block is None:
                errors.append((key, "missing block"))
                continue
            if not isinstance(block, dict):
                errors.append((key, "must be a mapping"))
                continue
            known = {f.name for f in fields(kind)}
            for extra in sorted(set(block) - known):
                errors.append((f"{key}.{extra}", "unknown field"))
            try:
                blocks[key] = kind(**{k: v for k, v in block.items() if k in known})
            except TypeError as exc:
                errors.append((key, str(exc)))
        for extra in sorted(set(raw) - {"name", "experiment", "model", "solver",
                                        "simulation", "compare"}):
            errors.append((extra, "unknown top-level key"))
        if errors:
            raise ConfigError(errors)
        cfg = cls(str(raw.get("name", "experiment")), raw.get("experiment"), **blocks)
        if validate:
            cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            raw = yaml.load(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ConfigError([("<file>", f"not valid YAML: {exc}")]) from exc
        return cls.from_dict(raw)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dump())

    def replace(self, **changes) -> "ExperimentConfig":
        raw = self.to_dict()
        raw.update(changes)
        return ExperimentConfig.from_dict(raw)

    # ---- model objects ------------------------------------------------

    def markspace(self) -> MarkSpace:
        ms = self.model.markspace
        return MarkSpace(tuple(ms["labels"]), np.asarray(ms["weights"], dtype=float))

    def mutation_kernel(self) -> MutationKernel:
        return MutationKernel(np.asarray(self.model.Q, dtype=float), self.markspace())

    def alpha(self) -> dispersal.DispersalKernel:
        return dispersal.from_dict(self.model.alpha, self.model.dim)

    def grid(self) -> TorusGrid:
        return TorusGrid(self.model.dim, float(self.model.box), int(self.solver.n_points))

    def model_for_solver(self) -> Model:
        return Model.build(float(self.model.kappa), self.mutation_kernel(),
                           np.asarray(self.model.c, dtype=float), self.alpha(), self.grid())

    def sim_params(self, kappa: float | None = None) -> SimParams:
        """Simulator parameters on the renormalised kernel (same rates as written)."""
        model = Model.build(float(self.model.kappa if kappa is None else kappa),
                            self.mutation_kernel(), np.asarray(self.model.c, dtype=float),
                            self.alpha())
        s = self.simulation
        return SimParams(
            kappa=model.kappa, kernel=model.kernel, immigration=model.immigration,
            box=float(self.model.box), alpha=model.alpha, seed=int(s.seed),
            horizon=float(s.horizon), burn_in=float(s.burn_in), n_replicas=int(s.replicas),
            n_batches=int(s.batches), cap=int(s.cap), bin_width=s.bin_width,
            initial_density=s.initial_density)

    # ---- validation ---------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        errors = []
        add = lambda path, msg: errors.append((path, msg))  # noqa: E731

        if self.experiment not in EXPERIMENTS:
            add("experiment", f"must be one of {', '.join(EXPERIMENTS)}, got {self.experiment!r}")
        m = self.model
        if not isinstance(m.dim, int) or m.dim < 1:
            add("model.dim", "must be a positive integer")
        if not _positive(m.box):
            add("model.box", "must be a positive number")
        if not _number(m.kappa) or m.kappa < 0:
            add("model.kappa", "must be a non-negative number")

        ms = None
        try:
            ms = self.markspace()
        except (KeyError, TypeError, ValueError) as exc:
            add("model.markspace", str(exc))
        kernel = None
        if ms is not None:
            try:
                kernel = self.mutation_kernel()
            except (TypeError, ValueError) as exc:
                add("model.Q", str(exc))
            try:
                c = np.asarray(m.c, dtype=float).ravel()
                if c.size != ms.size:
                    add("model.c", f"needs {ms.size} entries, got {c.size}")
                elif np.any(~np.isfinite(c)) or np.any(c <= 0):
                    add("model.c", "immigration rates must be strictly positive")
            except (TypeError, ValueError) as exc:
                add("model.c", str(exc))

        if kernel is not None and _number(m.kappa):
            spectral = krein_rutman(kernel)
            if m.kappa * spectral.r >= 1 - CRITICAL_MARGIN:
                add("model.kappa", f"kappa * r = {m.kappa * spectral.r:.6g} is not subcritical "
                                   f"(critical kappa = 1/r = {1 / spectral.r:.6g})")

        alpha = None
        if isinstance(m.dim, int) and m.dim >= 1:
            try:
                alpha = self.alpha()
            except (KeyError, TypeError, ValueError, np.linalg.LinAlgError) as exc:
                add("model.alpha", str(exc))
        sigma = alpha.length_scale if alpha is not None else None
        if sigma is not None and _positive(m.box) and m.box < MIN_BOX_LENGTHS * sigma:
            add("model.box", f"L = {m.box} is below {MIN_BOX_LENGTHS:g} dispersal standard "
                             f"deviations ({MIN_BOX_LENGTHS * sigma:.4g})")

        self._validate_solver(add, sigma)
        self._validate_simulation(add)
        self._validate_compare(add)
        if errors:
            raise ConfigError(errors)
        return self

    def _validate_solver(self, add, sigma):
        s = self.solver
        n = s.n_points
        if not isinstance(n, int) or n < 8 or n & (n - 1):
            add("solver.n_points", f"must be a power of two >= 8, got {n!r}")
        elif sigma is not None and _positive(self.model.box) \
                and self.experiment != "simulate" and self.model.box / n >= sigma:
            add("solver.n_points", f"grid spacing {self.model.box / n:.4g} does not resolve the "
                                   f"dispersal scale {sigma:.4g}")
        if not isinstance(s.n_max, int) or s.n_max < 1:
            add("solver.n_max", "must be a positive integer")
        if not _positive(s.tol) or s.tol >= 1:
            add("solver.tol", "must lie in (0, 1)")
        if s.representation not in REPRESENTATIONS:
            add("solver.representation", f"must be one of {', '.join(REPRESENTATIONS)}")
        if s.dt is not None and not _positive(s.dt):
            add("solver.dt", "must be positive when given")
        if not _positive(s.horizon):
            add("solver.horizon", "must be positive")
        if s.record_every is not None and (not isinstance(s.record_every, int)
                                           or s.record_every < 1):
            add("solver.record_every", "must be a positive integer when given")
        if not _positive(s.memory_budget):
            add("solver.memory_budget", "must be positive")
        init = s.initial
        if not isinstance(init, dict) or init.get("kind") not in INITIAL_KINDS:
            add("solver.initial.kind", f"must be one of {', '.join(INITIAL_KINDS)}")
        elif init["kind"] == "constant" and not _number(init.get("value")):
            add("solver.initial.value", "constant initial data needs a numeric value")
        elif init["kind"] == "file" and not init.get("path"):
            add("solver.initial.path", "file initial data needs a path")
        if s.factorization_radii is not None:
            radii = np.asarray(s.factorization_radii, dtype=float)
            if radii.ndim != 1 or np.any(radii < 0):
                add("solver.factorization_radii", "must be a list of non-negative radii")

    def _validate_simulation(self, add):
        s = self.simulation
        if not isinstance(s.seed, int) or s.seed < 0:
            add("simulation.seed", "must be a non-negative integer")
        if not _positive(s.horizon):
            add("simulation.horizon", "must be positive")
        if not _number(s.burn_in) or s.burn_in < 0 or (_positive(s.horizon)
                                                       and s.burn_in >= s.horizon):
            add("simulation.burn_in", "must satisfy 0 <= burn_in < horizon")
        for key in ("replicas", "batches", "cap"):
            val = getattr(s, key)
            if not isinstance(val, int) or val < 1:
                add(f"simulation.{key}", "must be a positive integer")
        if s.bin_width is not None and not _positive(s.bin_width):
            add("simulation.bin_width", "must be positive when given")
        if s.initial_density is not None:
            dens = np.asarray(s.initial_density, dtype=float)
            if dens.size != len(self.model.c) or np.any(dens < 0):
                add("simulation.initial_density", "needs one non-negative entry per mark")

    def _validate_compare(self, add):
        c = self.compare
        if not _positive(c.sigma):
            add("compare.sigma", "must be positive")
        if c.k2_r_max is not None and not _positive(c.k2_r_max):
            add("compare.k2_r_max", "must be positive when given")
        if c.kappa_sim_override is not None and (not _number(c.kappa_sim_override)
                                                 or c.kappa_sim_override < 0):
            add("compare.kappa_sim_override", "must be a non-negative number")


def _number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _positive(x) -> bool:
    return _number(x) and x > 0


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.load(path)
