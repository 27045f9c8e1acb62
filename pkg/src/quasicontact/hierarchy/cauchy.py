"""Time evolution of the correlation hierarchy toward its stationary state."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import CorrelationGrid, marks_to_difference, q_product
from .operators import Model, apply_a_sum, assemble_source
from .stationary import solve_stationary


class InstabilityError(RuntimeError):
    def __init__(self, message, time=None, order=None, norm=None):
        super().__init__(message)
        self.time, self.order, self.norm = time, order, norm


@dataclass
class CauchyTrajectory:
    times: np.ndarray
    norms: np.ndarray              # (steps + 1, n_max): sup |k^(n)(t) - k_c^(n)|
    final: list
    stationary: list
    snapshots: dict = field(default_factory=dict)

    def decay_rate(self, order: int, t_lo: float, t_hi: float, floor: float = 1e-13) -> float:
        return fit_decay_rate(self.times, self.norms[:, order - 1], t_lo, t_hi, floor)


def default_dt(n_max: int, kappa: float) -> float:
    return 0.1 / (n_max * (1 + kappa))


def fit_decay_rate(times, norms, t_lo, t_hi, floor=1e-13) -> float:
    """Least-squares exponential rate of ``norms`` over [t_lo, t_hi]."""
    times = np.asarray(times)
    norms = np.asarray(norms)
    sel = (times >= t_lo) & (times <= t_hi) & (norms > floor)
    if sel.sum() < 2:
        raise ValueError("not enough points above the floor to fit a rate")
    slope, _ = np.polyfit(times[sel], np.log(norms[sel]), 1)
    return float(-slope)


def zero_initial(model: Model, n_max: int) -> list:
    return constant_initial(model, n_max, 0.0)


def constant_initial(model: Model, n_max: int, value: float) -> list:
    m = model.n_marks
    out = [CorrelationGrid(1, "marks", np.full(m, float(value)), m)]
    for n in range(2, n_max + 1):
        k = CorrelationGrid(n, "marks", np.full((m,) * n, float(value) ** n), m)
        out.append(marks_to_difference(k, model.grid))
    return out


def _as_state(k0: list, model: Model) -> list:
    state = []
    for n, k in enumerate(k0, start=1):
        if k.order != n:
            raise ValueError(f"initial data out of order: slot {n} has order {k.order}")
        if n >= 2 and k.representation == "marks":
            k = marks_to_difference(k, model.grid)
        state.append(k)
    return state


def _weighted_sup(k: CorrelationGrid, q: np.ndarray) -> float:
    w = q_product(q, k.order)
    return float(np.max(np.abs(k.values) / w.reshape((1,) * k.spatial_ndim + w.shape)))


def evolve_cauchy(model: Model, k0: list, horizon: float, dt: float | None = None,
                  stationary: list | None = None, tol: float = 1e-12,
                  record_every: int | None = None, blowup: float = 1e3) -> CauchyTrajectory:
    """Integrate dk^(n)/dt = L*_n k^(n) + f^(n)(t) for n = 1..len(k0).

    Exponential Euler: the mortality term -n k is integrated exactly and
    ``sum_i A_i k + f`` is frozen over each step,
        k <- exp(-n dt) k + (1 - exp(-n dt)) / n * (sum_i A_i k + f).
    A stationary solution is an exact fixed point of this map.
    """
    n_max = len(k0)
    if n_max < 1:
        raise ValueError("need initial data for at least order 1")
    dt = default_dt(n_max, model.kappa) if dt is None else dt
    if not dt * n_max * (1 + model.kappa) < 1:
        raise ValueError(f"dt={dt} violates dt * n_max * (1 + kappa) < 1")
    if stationary is None:
        stationary, _ = solve_stationary(model, n_max, tol)
    stationary = _as_state(stationary[:n_max], model)
    state = _as_state(k0, model)
    q = model.q

    steps = int(math.ceil(horizon / dt - 1e-9))
    times = np.arange(steps + 1) * dt
    norms = np.empty((steps + 1, n_max))
    limits = [blowup * max(1.0, _weighted_sup(a, q), _weighted_sup(b, q))
              for a, b in zip(state, stationary)]
    decay = [math.exp(-n * dt) for n in range(1, n_max + 1)]
    snapshots = {}

    def record(step):
        for n in range(n_max):
            norms[step, n] = float(np.max(np.abs(state[n].values - stationary[n].values)))
        if record_every and step % record_every == 0:
            snapshots[float(times[step])] = list(state)

    record(0)
    for step in range(1, steps + 1):
        new = []
        for n in range(1, n_max + 1):
            k = state[n - 1]
            f = assemble_source(n, state[n - 2] if n > 1 else None, model)
            drive = apply_a_sum(k, model).values + f.values
            vals = decay[n - 1] * k.values + (1 - decay[n - 1]) / n * drive
            new.append(k.like(vals))
        state = new
        for n, k in enumerate(state, start=1):
            size = _weighted_sup(k, q)
            if not np.isfinite(size) or size > limits[n - 1]:
                raise InstabilityError(
                    f"order {n} grew to {size:.3e} at t={times[step]:.4g} "
                    f"(limit {limits[n - 1]:.3e})", times[step], n, size)
        record(step)
    return CauchyTrajectory(times, norms, state, stationary, snapshots)
