"""Hierarchy operators on discretised correlation functions.

For an order-n function ``L*_n k = -n k + sum_i A_i k`` where ``A_i`` integrates
slot i against ``kappa * alpha(x_i - y) Q(s_i, s')``: a spatial convolution
(Fourier multiplier) times the mutation action on mark axis i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dispersal import DispersalKernel
from ..markspace import MutationKernel, SpectralData, krein_rutman, renormalize
from .grids import (
    CorrelationGrid,
    TorusGrid,
    alpha_on_grid,
    gather,
    point_index_arrays,
    slot_multipliers,
    spatial_slots,
)


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Model:
    """Renormalised model: kernel has principal eigenvalue 1 and kappa < 1."""

    kappa: float
    kernel: MutationKernel
    immigration: np.ndarray
    alpha: DispersalKernel
    grid: TorusGrid | None = None
    spectral: SpectralData | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        c = np.asarray(self.immigration, dtype=float).ravel()
        if c.size != self.kernel.size:
            raise ValueError(f"immigration needs {self.kernel.size} entries, got {c.size}")
        if np.any(c <= 0):
            raise ValueError("immigration rate must be strictly positive for every mark")
        if not 0 <= self.kappa < 1:
            raise ValueError("effective kappa must lie in [0, 1)")
        object.__setattr__(self, "immigration", c)
        if self.spectral is None:
            object.__setattr__(self, "spectral", krein_rutman(self.kernel))
        if abs(self.spectral.r - 1.0) > 1e-9:
            raise ValueError("Model expects a renormalised kernel (r = 1); use Model.build")

    @classmethod
    def build(cls, kappa, kernel, immigration, alpha, grid=None):
        """Renormalise (kernel, kappa) and bundle the model."""
        spectral = krein_rutman(kernel)
        q_kernel, kappa_eff = renormalize(kernel, kappa, spectral)
        return cls(kappa_eff, q_kernel, immigration, alpha, grid)

    def with_grid(self, grid: TorusGrid) -> "Model":
        return Model(self.kappa, self.kernel, self.immigration, self.alpha, grid, self.spectral)

    def with_kappa(self, kappa: float) -> "Model":
        return Model(kappa, self.kernel, self.immigration, self.alpha, self.grid, self.spectral)

    @property
    def n_marks(self) -> int:
        return self.kernel.size

    @property
    def q(self) -> np.ndarray:
        return self.spectral.q

    @property
    def mutation(self) -> np.ndarray:
        """Weighted matrix Q(s, s') nu(s'); the mark action is a matvec."""
        return self.kernel.weighted

    def multipliers(self, order: int, representation: str) -> list:
        key = ("mult", order, representation)
        if key not in self._cache:
            self._cache[key] = slot_multipliers(self.grid, self.alpha, order, representation)
        return self._cache[key]

    def alpha_grid(self) -> np.ndarray:
        if "alpha" not in self._cache:
            self._cache["alpha"] = alpha_on_grid(self.grid, self.alpha)
        return self._cache["alpha"]


def _mark_action(w: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(w, arr, axes=([1], [axis])), 0, axis)


def _sum_a_fourier(arr: np.ndarray, order: int, representation: str, model: Model,
                   spatial_ndim: int) -> np.ndarray:
    """sum_i A_i applied to an array already in the spatial Fourier domain."""
    w = model.mutation
    out = np.zeros_like(arr)
    mults = model.multipliers(order, representation) if spatial_ndim else None
    tail = (None,) * order
    for i in range(order):
        term = _mark_action(w, arr, spatial_ndim + i)
        if mults is not None:
            term = term * mults[i][(Ellipsis,) + tail]
        out += term
    return model.kappa * out


def _spatial_axes(k: CorrelationGrid):
    return tuple(range(k.spatial_ndim))


def apply_a_sum(k: CorrelationGrid, model: Model) -> CorrelationGrid:
    """sum_i A_i k (the positive part of L*_n)."""
    axes = _spatial_axes(k)
    if not axes:
        vals = _sum_a_fourier(k.values, k.order, k.representation, model, 0)
        return k.like(vals)
    f = np.fft.fftn(k.values, axes=axes)
    f = _sum_a_fourier(f, k.order, k.representation, model, len(axes))
    return k.like(np.real(np.fft.ifftn(f, axes=axes)))


def apply_lstar(k: CorrelationGrid, model: Model) -> CorrelationGrid:
    _check_compatible(k, model)
    a = apply_a_sum(k, model)
    return k.like(a.values - k.order * k.values)


def neumann_terms(kappa: float, tol: float) -> int:
    """Smallest M with kappa**M / (1 - kappa) < tol."""
    if kappa == 0:
        return 1
    return max(1, math.ceil(math.log(tol * (1 - kappa)) / math.log(kappa)))


def resolvent_neumann(f: CorrelationGrid, model: Model, tol: float = 1e-12,
                      max_terms: int = 100_000) -> CorrelationGrid:
    """(-L*_n)^{-1} f = (1/n) sum_m A^m f with A = (1/n) sum_i A_i.

    The series is cut at the a-priori length from kappa; ``tol`` bounds the
    neglected tail relative to the q-weighted size of f.
    """
    _check_compatible(f, model)
    n = f.order
    terms = neumann_terms(model.kappa, tol)
    if terms > max_terms:
        raise BudgetExceeded(f"Neumann series needs {terms} terms (> budget {max_terms})")
    axes = _spatial_axes(f)
    term = np.fft.fftn(f.values, axes=axes) if axes else f.values.astype(float)
    total = term.copy()
    for _ in range(terms - 1):
        term = _sum_a_fourier(term, n, f.representation, model, len(axes)) / n
        total += term
    total /= n
    vals = np.real(np.fft.ifftn(total, axes=axes)) if axes else total
    return f.like(vals)


def _on_axes(values: np.ndarray, positions: tuple, order: int, lead: int) -> np.ndarray:
    shape = [1] * (lead + order)
    for p, size in zip(positions, values.shape):
        shape[lead + p] = size
    return values.reshape(shape)


def assemble_source(n: int, k_prev: CorrelationGrid | None, model: Model,
                    representation: str | None = None) -> CorrelationGrid:
    """Source term f^(n) built from k^(n-1).

    f^(n)(x) = sum_i k^(n-1)(x without x_i) (kappa sum_{j != i} a(x_i, x_j) + c(x_i)),
    with a(x, y) = alpha(x - y) Q(s_x, s_y).  ``f^(1) = c``.
    """
    m = model.n_marks
    c = model.immigration
    if n == 1:
        return CorrelationGrid(1, "marks", c.copy(), m)
    if k_prev is None or k_prev.order != n - 1:
        raise ValueError(f"source of order {n} needs k of order {n - 1}")
    if representation is None:
        representation = "full" if k_prev.representation == "full" else "difference"
    if representation not in ("difference", "full"):
        raise ValueError(f"unsupported source layout {representation!r}")
    if k_prev.representation == "full" and representation != "full":
        raise ValueError("cannot build a difference-layout source from a full-layout k")
    grid = model.grid
    if k_prev.grid is not None and k_prev.grid != grid:
        raise ValueError("k and model live on different grids")
    pts = point_index_arrays(grid, n, representation)
    ndim = grid.dim * spatial_slots(n, representation)
    alpha = model.alpha_grid()
    q = model.kernel.entries
    npts = grid.n_points

    total = 0.0
    for i in range(n):
        rest = [j for j in range(n) if j != i]
        prev = gather(k_prev, [pts[j] for j in rest], ndim)
        prev = np.expand_dims(prev, ndim + i)
        rate = _on_axes(c, (i,), n, ndim)
        for j in rest:
            idx = np.broadcast_arrays(*[(pts[i][a] - pts[j][a]) % npts for a in range(grid.dim)])
            a_ij = alpha[tuple(idx)].reshape(idx[0].shape + (1,) * n)
            q_ij = _on_axes(q if i < j else q.T, (min(i, j), max(i, j)), n, ndim)
            rate = rate + model.kappa * a_ij * q_ij
        total = total + prev * rate
    shape = CorrelationGrid.shape_for(n, representation, m, grid)
    return CorrelationGrid(n, representation, np.broadcast_to(total, shape).copy(), m, grid)


def product_k1(k1: CorrelationGrid, order: int) -> CorrelationGrid:
    """prod_i k1(s_i) as a marks-layout function of the given order."""
    vals = np.ones((1,) * order)
    for i in range(order):
        vals = vals * _on_axes(k1.values, (i,), order, 0)
    return CorrelationGrid(order, "marks", vals, k1.n_marks)


def product_source(k1: CorrelationGrid, model: Model, order: int) -> CorrelationGrid:
    """sum_i c(s_i) prod_{j != i} k1(s_j), the image of prod k1 under -L*_n."""
    out = np.zeros((k1.n_marks,) * order)
    for i in range(order):
        term = _on_axes(model.immigration, (i,), order, 0)
        for j in range(order):
            if j != i:
                term = term * _on_axes(k1.values, (j,), order, 0)
        out = out + term
    return CorrelationGrid(order, "marks", out, k1.n_marks)


def _check_compatible(k: CorrelationGrid, model: Model):
    if k.n_marks != model.n_marks:
        raise ValueError("mark count differs between k and model")
    if k.slots and k.grid != model.grid:
        raise ValueError("k and model live on different grids")
