"""Exact event-driven simulation of the marked contact process with immigration.

The process lives on the torus [0, L)^d.  Each particle dies at rate 1; a
particle with mark s' produces offspring at total rate kappa * B(s'),
``B(s') = sum_s Q(s, s') nu(s)``, the child displaced by a draw from alpha
(wrapped onto the torus) and carrying mark s with probability
``Q(s, s') nu(s) / B(s')``; immigrants arrive at rate ``L^d sum_s c(s) nu(s)``
with a uniform position and mark drawn proportional to ``c(s) nu(s)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dispersal import DispersalKernel
from .markspace import MutationKernel

WORKERS_ENV = "QUASICONTACT_WORKERS"


class PopulationExplosion(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SimParams:
    kappa: float
    kernel: MutationKernel
    immigration: np.ndarray
    box: float
    alpha: DispersalKernel
    seed: int
    horizon: float
    burn_in: float = 0.0
    n_replicas: int = 1
    n_batches: int = 1
    cap: int = 1_000_000
    bin_width: float | None = None
    initial_density: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.immigration, dtype=float).ravel()
        if c.size != self.kernel.size or np.any(c <= 0):
            raise ValueError("immigration must be strictly positive, one entry per mark")
        object.__setattr__(self, "immigration", c)
        if not 0 <= self.kappa < 1:
            raise ValueError("effective kappa must lie in [0, 1)")
        if not self.box > 0:
            raise ValueError("box side must be positive")
        if not self.horizon > self.burn_in >= 0:
            raise ValueError("need horizon > burn_in >= 0")
        if self.n_replicas < 1 or self.n_batches < 1:
            raise ValueError("need at least one replica and one batch")
        if self.initial_density is not None:
            dens = np.asarray(self.initial_density, dtype=float).ravel()
            if dens.size != c.size or np.any(dens < 0):
                raise ValueError("initial density needs one non-negative entry per mark")
            object.__setattr__(self, "initial_density", dens)

    @property
    def dim(self) -> int:
        return self.alpha.dim

    @property
    def volume(self) -> float:
        return self.box ** self.dim

    @property
    def n_marks(self) -> int:
        return self.kernel.size

    def bin_edges(self) -> np.ndarray:
        width = self.bin_width or self.alpha.length_scale / 10
        r_max = self.box / 2
        n_bins = max(1, int(round(r_max / width)))
        return np.linspace(0.0, r_max, n_bins + 1)


@dataclass
class EstimatorAccumulators:
    """Time integrals gathered after burn-in, one row per (replica, batch)."""

    edges: np.ndarray
    count_time: np.ndarray       # (B, m)          integral of per-mark counts
    pair_time: np.ndarray        # (B, bins, m, m) integral of ordered-pair histogram
    batch_time: np.ndarray       # (B,)
    events: np.ndarray           # (R, 3) deaths, contact births, immigrations
    rate_time: np.ndarray        # (R, 3) integrals of the three total rates over [0, T]
    initial_size: np.ndarray     # (R,)
    final_size: np.ndarray       # (R,)
    replica_ids: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def merge(self, other: "EstimatorAccumulators") -> "EstimatorAccumulators":
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("cannot merge accumulators with different bins")
        cat = np.concatenate
        return EstimatorAccumulators(
            self.edges,
            cat([self.count_time, other.count_time]),
            cat([self.pair_time, other.pair_time]),
            cat([self.batch_time, other.batch_time]),
            cat([self.events, other.events]),
            cat([self.rate_time, other.rate_time]),
            cat([self.initial_size, other.initial_size]),
            cat([self.final_size, other.final_size]),
            self.replica_ids + other.replica_ids,
            self.failures + other.failures,
        )

    @property
    def failed(self) -> bool:
        return bool(self.failures)


class Configuration:
    """Marked particles on the torus with an incrementally kept pair histogram."""

    def __init__(self, dim: int, box: float, n_marks: int, edges: np.ndarray,
                 capacity: int = 256):
        self.dim, self.box, self.n_marks = dim, box, n_marks
        self.positions = np.empty((capacity, dim))
        self.marks = np.empty(capacity, dtype=np.int64)
        self.size = 0
        self.time = 0.0
        self.counts = np.zeros(n_marks, dtype=np.int64)
        self.r_max = float(edges[-1])
        self.n_bins = len(edges) - 1
        self.width = self.r_max / self.n_bins
        self.hist = np.zeros(self.n_bins * n_marks * n_marks, dtype=np.int64)

    def _pair_codes(self, x: np.ndarray, s: int, others: slice | np.ndarray):
        diff = self.positions[others] - x
        diff -= self.box * np.round(diff / self.box)
        r = np.sqrt(np.einsum("ij,ij->i", diff, diff)) if self.dim > 1 else np.abs(diff[:, 0])
        keep = r <= self.r_max
        b = np.minimum((r[keep] / self.width).astype(np.int64), self.n_bins - 1)
        o = self.marks[others][keep]
        m = self.n_marks
        mm = m * m
        return np.concatenate([b * mm + s * m + o, b * mm + o * m + s])

    def insert(self, x: np.ndarray, s: int) -> None:
        n = self.size
        if n == len(self.marks):
            self.positions = np.concatenate([self.positions, np.empty_like(self.positions)])
            self.marks = np.concatenate([self.marks, np.empty_like(self.marks)])
        if n:
            codes = self._pair_codes(x, s, slice(0, n))
            self.hist += np.bincount(codes, minlength=self.hist.size)
        self.positions[n] = x
        self.marks[n] = s
        self.counts[s] += 1
        self.size = n + 1

    def remove(self, idx: int) -> None:
        n = self.size - 1
        x = self.positions[idx].copy()
        s = int(self.marks[idx])
        # swap with the last particle, then drop it
        self.positions[idx] = self.positions[n]
        self.marks[idx] = self.marks[n]
        self.size = n
        if n:
            codes = self._pair_codes(x, s, slice(0, n))
            self.hist -= np.bincount(codes, minlength=self.hist.size)
        self.counts[s] -= 1

    def ordered_pairs(self) -> int:
        return int(self.hist.sum())


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica)]))


def total_rates(cfg: Configuration, params: SimParams):
    """(death, contact birth, immigration) total rates of the current state."""
    b = params.kernel.offspring_weight()
    death = float(cfg.size)
    contact = params.kappa * float(cfg.counts @ b)
    immigration = params.volume * float(params.immigration @ params.kernel.markspace.weights)
    return death, contact, immigration


class _Tables:
    def __init__(self, params: SimParams):
        nu = params.kernel.markspace.weights
        q = params.kernel.entries
        self.b = params.kernel.offspring_weight()
        self.b_max = float(self.b.max())
        # child mark cdf per parent mark s'
        self.child_cdf = np.cumsum(q * nu[:, None] / self.b[None, :], axis=0).T
        imm = params.immigration * nu
        self.imm_rate = params.volume * float(imm.sum())
        self.imm_cdf = np.cumsum(imm / imm.sum())
        self.single_mark = params.n_marks == 1


def _draw(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u, side="right")), cdf.size - 1)


def sample_child_mark(params: SimParams, parent: int, rng: np.random.Generator) -> int:
    return _draw(_Tables(params).child_cdf[parent], rng.random())


def step(cfg: Configuration, params: SimParams, rng: np.random.Generator,
         tables: _Tables | None = None, horizon: float = math.inf, on_hold=None):
    """One Gillespie step.

    ``on_hold(t0, t1, rates)`` is called while the configuration still
    holds its pre-event state over [t0, t1).  Returns (event, dt, rates):
    event is "death", "birth", "immigration", or None when the next event
    would fall past ``horizon`` (time is then set to the horizon).
    """
    tab = tables or _Tables(params)
    n = cfg.size
    death = float(n)
    contact = params.kappa * float(cfg.counts @ tab.b)
    total = death + contact + tab.imm_rate
    rates = (death, contact, tab.imm_rate)
    dt = rng.exponential(1.0 / total)
    if cfg.time + dt > horizon:
        dt = horizon - cfg.time
    if on_hold is not None:
        on_hold(cfg.time, cfg.time + dt, rates)
    if cfg.time + dt >= horizon:
        cfg.time = horizon
        return None, dt, rates
    cfg.time += dt
    u = rng.random() * total
    if u < death:
        cfg.remove(int(rng.integers(n)))
        return "death", dt, rates
    if u < death + contact:
        if tab.single_mark:
            parent = int(rng.integers(n))
        else:
            while True:
                parent = int(rng.integers(n))
                if rng.random() * tab.b_max < tab.b[cfg.marks[parent]]:
                    break
        s_parent = int(cfg.marks[parent])
        x = (cfg.positions[parent] + params.alpha.sample(rng)) % params.box
        x[x >= params.box] = 0.0
        s = 0 if tab.single_mark else _draw(tab.child_cdf[s_parent], rng.random())
        cfg.insert(x, s)
        return "birth", dt, rates
    x = rng.random(cfg.dim) * params.box
    s = 0 if tab.single_mark else _draw(tab.imm_cdf, rng.random())
    cfg.insert(x, s)
    return "immigration", dt, rates


_EVENT_INDEX = {"death": 0, "birth": 1, "immigration": 2}


def _seed_initial(cfg: Configuration, params: SimParams, rng: np.random.Generator):
    if params.initial_density is None:
        return
    nu = params.kernel.markspace.weights
    for s, dens in enumerate(params.initial_density):
        for _ in range(rng.poisson(dens * nu[s] * params.volume)):
            cfg.insert(rng.random(cfg.dim) * params.box, s)


def _family_arrays(alpha: DispersalKernel):
    """Flatten a dispersal kernel into the arguments of the compiled loop."""
    from . import _engine
    from .dispersal import GaussianKernel, UniformBallKernel, UniformBoxKernel

    d = alpha.dim
    mean, chol, radius, half = np.zeros(d), np.zeros((d, d)), 0.0, np.zeros(d)
    if isinstance(alpha, GaussianKernel):
        family, mean, chol = _engine.GAUSSIAN, alpha.mean, alpha._chol
    elif isinstance(alpha, UniformBallKernel):
        family, radius = _engine.BALL, float(alpha.radius)
    elif isinstance(alpha, UniformBoxKernel):
        family, half = _engine.BOX, alpha.half_widths
    else:
        raise TypeError(f"no compiled sampler for {type(alpha).__name__}")
    return family, np.ascontiguousarray(mean, dtype=float), \
        np.ascontiguousarray(chol, dtype=float), radius, np.ascontiguousarray(half, dtype=float)


def run_replica(params: SimParams, replica: int = 0,
                engine: str = "numba") -> EstimatorAccumulators:
    """Simulate one replica on [0, T]; accumulate estimators after burn-in.

    ``engine="numba"`` runs the compiled loop; ``engine="python"`` runs
    :func:`step` and is kept as the readable reference.
    """
    if engine not in ("numba", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    rng = replica_rng(params.seed, replica)
    edges = params.bin_edges()
    m = params.n_marks
    cfg = Configuration(params.dim, params.box, m, edges)
    tab = _Tables(params)
    _seed_initial(cfg, params, rng)

    n_b = params.n_batches
    count_time = np.zeros((n_b, m))
    pair_time = np.zeros((n_b, cfg.hist.size))
    batch_time = np.zeros(n_b)
    events = np.zeros(3, dtype=np.int64)
    rate_time = np.zeros(3)
    initial = cfg.size
    failures = []

    if engine == "numba":
        from . import _engine

        cap = int(params.cap)
        pos = np.empty((max(cap, cfg.size) + 2, params.dim))
        marks = np.empty(pos.shape[0], dtype=np.int64)
        pos[:cfg.size] = cfg.positions[:cfg.size]
        marks[:cfg.size] = cfg.marks[:cfg.size]
        family, mean, chol, radius, half = _family_arrays(params.alpha)
        size, failed, t_fail = _engine.run_loop(
            rng, pos, marks, cfg.size, cfg.counts, cfg.hist, float(params.kappa),
            float(params.box), tab.b, tab.b_max, np.ascontiguousarray(tab.child_cdf),
            tab.imm_rate, tab.imm_cdf, family, mean, chol, radius, half,
            float(params.burn_in), float(params.horizon), n_b, cfg.r_max, cfg.width,
            cfg.n_bins, cap, count_time, pair_time, batch_time, events, rate_time)
        final = int(size)
        if failed:
            failures.append(f"replica {replica}: population {final} exceeded cap "
                            f"{params.cap} at t={t_fail:.4g}")
    else:
        span = (params.horizon - params.burn_in) / n_b

        def on_hold(t0, t1, rates):
            rate_time[:] += np.asarray(rates) * (t1 - t0)
            t0 = max(t0, params.burn_in)
            while t1 > t0:
                b = min(int((t0 - params.burn_in) / span), n_b - 1)
                end = t1 if b == n_b - 1 else min(t1, params.burn_in + (b + 1) * span)
                w = end - t0
                count_time[b] += w * cfg.counts
                pair_time[b] += w * cfg.hist
                batch_time[b] += w
                t0 = end

        while True:
            event, _, _ = step(cfg, params, rng, tab, params.horizon, on_hold)
            if event is None:
                break
            events[_EVENT_INDEX[event]] += 1
            if cfg.size > params.cap:
                failures.append(f"replica {replica}: population {cfg.size} exceeded cap "
                                f"{params.cap} at t={cfg.time:.4g}")
                break
        final = cfg.size

    return EstimatorAccumulators(
        edges,
        count_time,
        pair_time.reshape(n_b, len(edges) - 1, m, m),
        batch_time,
        events[None, :],
        rate_time[None, :],
        np.array([initial]),
        np.array([final]),
        [replica],
        failures,
    )


def worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_replicas(params: SimParams, workers: int | None = None,
                 engine: str = "numba") -> EstimatorAccumulators:
    """All replicas, merged in replica order (independent of scheduling)."""
    workers = worker_count() if workers is None else workers
    ids = list(range(params.n_replicas))
    if workers > 1 and len(ids) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(ids))) as pool:
            parts = list(pool.map(run_replica, [params] * len(ids), ids,
                                  [engine] * len(ids)))
    else:
        parts = [run_replica(params, r, engine) for r in ids]
    acc = parts[0]
    for part in parts[1:]:
        acc = acc.merge(part)
    return acc


def _batch_se(per_batch: np.ndarray) -> np.ndarray:
    nb = per_batch.shape[0]
    if nb < 2:
        return np.full(per_batch.shape[1:], np.nan)
    return per_batch.std(axis=0, ddof=1) / math.sqrt(nb)


def estimate_k1(acc: EstimatorAccumulators, params: SimParams):
    """Per-mark density relative to nu, with a batch-spread standard error."""
    total = acc.batch_time.sum()
    if total <= 0:
        raise ValueError("no accumulated time after burn-in")
    nu = params.kernel.markspace.weights
    norm = params.volume * nu
    est = acc.count_time.sum(0) / total / norm
    per_batch = acc.count_time / acc.batch_time[:, None] / norm
    return est, _batch_se(per_batch)


def shell_volumes(edges: np.ndarray, dim: int) -> np.ndarray:
    unit = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
    return unit * np.diff(edges ** dim)


def estimate_pair_correlation(acc: EstimatorAccumulators, params: SimParams):
    """Binned pair correlation k2(r; s, s') with batch-spread standard errors.

    Ordered-pair time integrals are divided by time, L^d, the shell volume
    and nu(s) nu(s'), so a Poisson field of density k1 gives k1(s) k1(s').
    Bins that never saw a pair are NaN.
    Returns (edges, estimate, stderr), the last two of shape (bins, m, m).
    """
    total = acc.batch_time.sum()
    if total <= 0:
        raise ValueError("no accumulated time after burn-in")
    nu = params.kernel.markspace.weights
    norm = (params.volume * shell_volumes(acc.edges, params.dim))[:, None, None] \
        * np.outer(nu, nu)[None]
    summed = acc.pair_time.sum(0)
    est = summed / total / norm
    per_batch = acc.pair_time / acc.batch_time[:, None, None, None] / norm[None]
    se = _batch_se(per_batch)
    empty = summed == 0
    est = np.where(empty, np.nan, est)
    se = np.where(empty, np.nan, se)
    return acc.edges, est, se
