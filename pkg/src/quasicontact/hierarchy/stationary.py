"""Stationary correlation functions and their diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .grids import (
    CorrelationGrid,
    TorusGrid,
    min_separation,
    q_product,
    slot_multipliers,
)
from .operators import Model, assemble_source, neumann_terms, resolvent_neumann

POSITIVITY_TOL = 1e-10
# bytes per stored value, used by the memory guard
_FLOAT = 8


class NegativeSolutionError(RuntimeError):
    pass


class MemoryBudgetError(RuntimeError):
    pass


def solve_k1(model: Model, tol: float = 1e-12) -> CorrelationGrid:
    """k1 = (1 - kappa Q)^{-1} c from a dense solve, cross-checked by the Neumann series."""
    w = model.mutation
    c = model.immigration
    terms = neumann_terms(model.kappa, tol)
    term = c.copy()
    k1 = c.copy()
    for _ in range(terms - 1):
        term = model.kappa * (w @ term)
        k1 += term
    direct = np.linalg.solve(np.eye(model.n_marks) - model.kappa * w, c)
    err = np.max(np.abs(k1 - direct)) / np.max(np.abs(direct))
    if err > max(100 * tol, 1e-10):
        raise RuntimeError(f"Neumann k1 disagrees with the direct solve (rel. error {err:.2e})")
    return CorrelationGrid(1, "marks", direct, model.n_marks)


def density_scale(model: Model) -> float:
    """rho = c / (1 - kappa) for the one-point mark space."""
    if model.n_marks != 1:
        raise ValueError("closed form is only available without marks")
    return float(model.immigration[0] / (1 - model.kappa))


def k2_unmarked_spectrum(model: Model, grid: TorusGrid | None = None) -> np.ndarray:
    """DFT coefficients (numpy convention) of the regular part of k2 - rho^2."""
    grid = grid or model.grid
    rho = density_scale(model)
    m1, m2 = slot_multipliers(grid, model.alpha, 2, "difference")
    s = model.kappa * (m1 + m2)
    return rho * s / (2.0 - s)


def solve_k2_unmarked(model: Model, strict: bool = False) -> CorrelationGrid:
    """Pair correlation of the unmarked model, k2(x1 - x2), in closed form.

    Uses the Fourier solution on the torus; the constant background rho^2
    is added in real space rather than as a zero-frequency spike.
    """
    grid = model.grid
    grid.validate_kernel(model.alpha, strict=strict)
    rho = density_scale(model)
    g_hat = k2_unmarked_spectrum(model)
    g = np.real(np.fft.ifftn(g_hat)) / grid.cell_volume
    vals = (rho ** 2 + g)[..., None, None]
    return CorrelationGrid(2, "difference", vals, 1, grid)


def enforce_nonnegative(k: CorrelationGrid, tol: float = POSITIVITY_TOL) -> CorrelationGrid:
    """Zero round-off negatives; raise if anything is below -tol * sup|k|."""
    vals = k.values
    floor = -tol * max(k.sup(), 1e-300)
    if np.any(vals < floor):
        raise NegativeSolutionError(
            f"order-{k.order} solution has value {vals.min():.3e} below {floor:.3e}")
    return k.like(np.where(vals < 0, 0.0, vals))


@dataclass
class GrowthReport:
    orders: list
    sup_ratio: list           # sup k^(n) / (n! prod q)
    H: float
    D: float
    sup_ratio_squared: list   # sup k^(n) / ((n!)^2 prod q), for contrast

    def bound(self, n: int) -> float:
        return self.D * self.H ** n


def growth_ratio(k: CorrelationGrid, q: np.ndarray, squared: bool = False) -> float:
    fact = math.factorial(k.order)
    denom = q_product(q, k.order) * (fact ** 2 if squared else fact)
    lead = (1,) * k.spatial_ndim
    return float(np.max(k.values / denom.reshape(lead + denom.shape)))


def growth_report(grids: list, q: np.ndarray) -> GrowthReport:
    """Constants D, H with sup k^(n)/(n! prod q) <= D H^n over the computed orders."""
    orders = [k.order for k in grids]
    ratios = [growth_ratio(k, q) for k in grids]
    sq = [growth_ratio(k, q, squared=True) for k in grids]
    if len(orders) >= 2:
        slope, _ = np.polyfit(orders, np.log(ratios), 1)
        H = float(np.exp(slope))
    else:
        H = 1.0
    D = max(r / H ** n for n, r in zip(orders, ratios))
    return GrowthReport(orders, ratios, H, float(D), sq)


def estimate_memory(n_max: int, grid: TorusGrid, n_marks: int,
                    representation: str = "difference") -> int:
    """Peak bytes for the largest order: values plus complex Fourier work arrays."""
    cells = CorrelationGrid.shape_for(n_max, representation, n_marks, grid) if n_max > 1 else (n_marks,)
    return int(np.prod(cells)) * _FLOAT * 6


def solve_stationary(model: Model, n_max: int, tol: float = 1e-12,
                     representation: str = "difference",
                     memory_budget: float = 2e9):
    """k^(1..n_max) by recursion k^(n) = (-L*_n)^{-1} f^(n).

    Returns (grids, growth report).  Order 1 is kept in the marks layout.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if n_max > 1:
        if model.grid is None:
            raise ValueError("orders above 1 need a grid")
        need = estimate_memory(n_max, model.grid, model.n_marks, representation)
        if need > memory_budget:
            raise MemoryBudgetError(
                f"order {n_max} on this grid needs ~{need / 1e9:.2f} GB "
                f"(budget {memory_budget / 1e9:.2f} GB)")
        model.grid.validate_kernel(model.alpha)
    grids = [solve_k1(model, tol)]
    for n in range(2, n_max + 1):
        f = assemble_source(n, grids[-1], model, representation)
        grids.append(enforce_nonnegative(resolvent_neumann(f, model, tol)))
    return grids, growth_report(grids, model.q)


@dataclass
class FactorizationReport:
    radii: np.ndarray
    deviation: np.ndarray     # max |k - prod k1| over cells with all separations >= radius
    cells: np.ndarray         # number of spatial cells in each set

    @property
    def monotone(self) -> bool:
        d = self.deviation[np.isfinite(self.deviation)]
        return bool(np.all(np.diff(d) <= 0))


def factorization_deviation(k: CorrelationGrid, k1: CorrelationGrid) -> np.ndarray:
    """|k - prod_i k1(s_i)| maximised over marks, as a spatial array."""
    prod = np.ones((1,) * k.order)
    for i in range(k.order):
        shape = [1] * k.order
        shape[i] = k1.n_marks
        prod = prod * k1.values.reshape(shape)
    dev = np.abs(k.values - prod.reshape((1,) * k.spatial_ndim + prod.shape))
    return dev.reshape(dev.shape[:k.spatial_ndim] + (-1,)).max(-1)


def check_factorization(k: CorrelationGrid, k1: CorrelationGrid, radii) -> FactorizationReport:
    if k.order < 2:
        raise ValueError("factorisation needs order >= 2")
    radii = np.asarray(radii, dtype=float)
    dev = factorization_deviation(k, k1)
    if k.representation == "marks":
        sep = np.full(dev.shape, np.inf)
    else:
        sep = np.broadcast_to(min_separation(k.grid, k.order, k.representation), dev.shape)
    out = np.full(radii.shape, np.nan)
    cells = np.zeros(radii.shape, dtype=int)
    for idx, rho in enumerate(radii):
        mask = sep >= rho * (1 - 1e-12)
        cells[idx] = int(mask.sum())
        if cells[idx]:
            out[idx] = float(dev[mask].max())
    return FactorizationReport(radii, out, cells)


def shell_average(k: CorrelationGrid, edges) -> np.ndarray:
    """Average of an order-2 difference-layout k over spherical shells |u| in [lo, hi).

    Exact for the band-limited grid function: each Fourier mode is averaged
    with the closed-form ball transform (2 pi R / |p|)^{d/2} J_{d/2}(|p| R).
    Returns shape (n_bins, m, m).
    """
    if k.order != 2 or k.representation != "difference":
        raise ValueError("shell averages need an order-2 difference-layout grid")
    grid = k.grid
    edges = np.asarray(edges, dtype=float)
    if edges[-1] > grid.box / 2 + 1e-12:
        raise ValueError("shells must stay within half the box")
    d = grid.dim
    coeff = np.fft.fftn(k.values, axes=tuple(range(d))) * grid.cell_volume / grid.volume
    p = grid.freqs()
    pp = np.sqrt(sum(g ** 2 for g in np.meshgrid(*([p] * d), indexing="ij")))

    def ball(radius):
        z = pp * radius
        safe = np.where(z == 0, 1.0, z)
        val = (2 * np.pi * radius / np.where(pp == 0, 1.0, pp)) ** (d / 2) * special.jv(d / 2, safe)
        vol0 = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius ** d
        return np.where(pp == 0, vol0, val)

    out = []
    b_lo = ball(edges[0])
    for hi in edges[1:]:
        b_hi = ball(hi)
        shell = b_hi - b_lo
        vol = shell.flat[0]
        weight = (shell / vol)[(Ellipsis, None, None)]
        out.append(np.real(np.sum(coeff * weight, axis=tuple(range(d)))))
        b_lo = b_hi
    return np.array(out)
