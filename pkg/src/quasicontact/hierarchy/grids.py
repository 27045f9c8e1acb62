"""Torus discretisation and correlation-function containers.

Three storage layouts are used for an order-n correlation function:

``marks``
    spatially constant, values shape ``(m,) * n``.
``difference``
    translation invariant, stored as a function of ``x_j - x_n`` for
    ``j < n``; values shape ``(N,) * (d * (n - 1)) + (m,) * n``.
``full``
    values over every point, shape ``(N,) * (d * n) + (m,) * n``.

Spatial axes come first, slot by slot, then one mark axis per point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..dispersal import DispersalKernel

REPRESENTATIONS = ("marks", "difference", "full")
NYQUIST_LIMIT = 1e-3
# samples per axis between the Nyquist frequency and twice it
NYQUIST_SAMPLES = 33


class AliasingWarning(UserWarning):
    pass


class AliasingError(RuntimeError):
    """Raised instead of AliasingWarning when the check is strict."""


@dataclass(frozen=True)
class TorusGrid:
    dim: int
    box: float
    n_points: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("grid dimension must be >= 1")
        if not self.box > 0:
            raise ValueError("box side must be positive")
        n = self.n_points
        if n < 8 or n & (n - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {n}")

    @property
    def spacing(self) -> float:
        return self.box / self.n_points

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def volume(self) -> float:
        return self.box ** self.dim

    def coords(self) -> np.ndarray:
        return np.arange(self.n_points) * self.spacing

    def freqs(self) -> np.ndarray:
        """Angular frequencies 2 pi k / L in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    def nyquist(self) -> float:
        return np.pi / self.spacing

    def validate_kernel(self, kernel: DispersalKernel, strict: bool = False) -> float:
        """Check spacing against the dispersal scale; return |alpha_hat| at Nyquist.

        Raises if the spacing is not below the dispersal length.  The returned
        magnitude is the largest |alpha_hat| on the Nyquist face of each axis
        and on its outward shifts up to twice the Nyquist frequency: those are
        the frequencies that fold back into the band, and a single sample at
        p = pi / h can sit on a zero of an oscillating transform.  A value
        above NYQUIST_LIMIT warns, or raises when ``strict``.
        """
        if kernel.dim != self.dim:
            raise ValueError("kernel and grid dimensions differ")
        if not self.spacing < kernel.length_scale:
            raise ValueError(
                f"grid spacing {self.spacing:g} is not below the dispersal "
                f"length {kernel.length_scale:g}")
        p = self.freqs()
        pts = np.stack(np.meshgrid(*([p] * self.dim), indexing="ij"), -1)
        worst = 0.0
        for ax in range(self.dim):
            face = pts.take([self.n_points // 2], axis=ax).reshape(-1, self.dim)
            for t in np.linspace(1.0, 2.0, NYQUIST_SAMPLES):
                for sign in (1.0, -1.0):
                    shifted = face.copy()
                    shifted[:, ax] = sign * t * self.nyquist()
                    worst = max(worst, float(np.max(np.abs(kernel.char_fn(shifted)))))
        if worst > NYQUIST_LIMIT:
            msg = (f"|alpha_hat| at or above the Nyquist frequency reaches {worst:.2e} "
                   f"(> {NYQUIST_LIMIT:g}); the grid under-resolves the kernel")
            if strict:
                raise AliasingError(msg)
            warnings.warn(msg, AliasingWarning, stacklevel=2)
        return worst


def spatial_slots(order: int, representation: str) -> int:
    if representation == "marks":
        return 0
    if representation == "difference":
        return order - 1
    if representation == "full":
        return order
    raise ValueError(f"unknown representation {representation!r}")


@dataclass(frozen=True, eq=False)
class CorrelationGrid:
    order: int
    representation: str
    values: np.ndarray
    n_marks: int
    grid: TorusGrid | None = None

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.representation == "difference" and self.order < 2:
            raise ValueError("difference layout needs order >= 2")
        slots = spatial_slots(self.order, self.representation)
        if slots and self.grid is None:
            raise ValueError(f"{self.representation} layout needs a grid")
        values = np.asarray(self.values, dtype=float)
        expected = self.shape_for(self.order, self.representation, self.n_marks, self.grid)
        if values.shape != expected:
            raise ValueError(f"values have shape {values.shape}, expected {expected}")
        object.__setattr__(self, "values", values)

    @staticmethod
    def shape_for(order, representation, n_marks, grid):
        slots = spatial_slots(order, representation)
        spatial = (grid.n_points,) * (grid.dim * slots) if slots else ()
        return spatial + (n_marks,) * order

    @property
    def slots(self) -> int:
        return spatial_slots(self.order, self.representation)

    @property
    def spatial_ndim(self) -> int:
        return self.slots * (self.grid.dim if self.grid else 0)

    def like(self, values) -> "CorrelationGrid":
        return CorrelationGrid(self.order, self.representation, values, self.n_marks, self.grid)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def slot_freqs(grid: TorusGrid, slots: int) -> list:
    """Per slot, a list of d broadcastable frequency arrays."""
    p = grid.freqs()
    ndim = grid.dim * slots
    out = []
    for s in range(slots):
        axes = []
        for a in range(grid.dim):
            shape = [1] * ndim
            shape[s * grid.dim + a] = grid.n_points
            axes.append(p.reshape(shape))
        out.append(axes)
    return out


def _hermitian(mult: np.ndarray) -> np.ndarray:
    """Average with the conjugate at -k so the operator maps reals to reals."""
    idx = np.ix_(*[(-np.arange(n)) % n for n in mult.shape])
    return 0.5 * (mult + np.conj(mult[idx]))


def _char_on(kernel: DispersalKernel, comps: list) -> np.ndarray:
    pts = np.stack(np.broadcast_arrays(*comps), -1)
    return kernel.char_fn(pts)


def slot_multipliers(grid: TorusGrid, kernel: DispersalKernel, order: int,
                     representation: str) -> list:
    """Fourier multipliers of ``u -> integral alpha(x_i - y) u(..y..) dy`` per point i.

    The DFT convention here is numpy's (``exp(-i p x)``), so convolution with
    alpha multiplies by ``alpha_hat(-p)``.  In the difference layout the last
    point shifts every relative coordinate, giving ``alpha_hat(sum p_j)``.
    """
    slots = spatial_slots(order, representation)
    freqs = slot_freqs(grid, slots)
    shape = (grid.n_points,) * (grid.dim * slots)
    mults = []
    for s in range(slots):
        m = _char_on(kernel, [-f for f in freqs[s]])
        mults.append(_hermitian(np.broadcast_to(m, shape)))
    if representation == "difference":
        total = [sum(freqs[s][a] for s in range(slots)) for a in range(grid.dim)]
        m = _char_on(kernel, total)
        mults.append(_hermitian(np.broadcast_to(m, shape)))
    return mults


def alpha_on_grid(grid: TorusGrid, kernel: DispersalKernel) -> np.ndarray:
    """Band-limited torus samples of alpha, consistent with slot_multipliers."""
    m = slot_multipliers(grid, kernel, 1, "full")[0]
    return np.real(np.fft.ifftn(m)) / grid.cell_volume


def point_index_arrays(grid: TorusGrid, order: int, representation: str) -> list:
    """Integer grid coordinates of each point, broadcastable over the spatial shape.

    For the difference layout the last point is the origin.
    """
    slots = spatial_slots(order, representation)
    ndim = grid.dim * slots
    pts = []
    for j in range(order):
        if j < slots:
            axes = []
            for a in range(grid.dim):
                shape = [1] * ndim
                shape[j * grid.dim + a] = grid.n_points
                axes.append(np.arange(grid.n_points).reshape(shape))
            pts.append(axes)
        else:
            pts.append([np.zeros((1,) * ndim, dtype=int) for _ in range(grid.dim)])
    return pts


def gather(k: CorrelationGrid, points: list, ndim: int) -> np.ndarray:
    """Evaluate k at the given point coordinates (lists of d index arrays).

    Returns an array of spatial ndim ``ndim`` followed by k's mark axes.
    """
    marks = k.values.shape[k.spatial_ndim:]
    if k.representation == "marks":
        return k.values.reshape((1,) * ndim + marks)
    n = k.grid.n_points
    if k.representation == "difference":
        origin = points[-1]
        idx = [(p[a] - origin[a]) % n for p in points[:-1] for a in range(k.grid.dim)]
    else:
        idx = [p[a] % n for p in points for a in range(k.grid.dim)]
    idx = np.broadcast_arrays(*idx)
    return k.values[tuple(idx) + (Ellipsis,)]


def to_full(k: CorrelationGrid, grid: TorusGrid | None = None) -> CorrelationGrid:
    grid = grid or k.grid
    if k.representation == "full":
        return k
    pts = point_index_arrays(grid, k.order, "full")
    ndim = grid.dim * k.order
    vals = gather(k, pts, ndim)
    shape = CorrelationGrid.shape_for(k.order, "full", k.n_marks, grid)
    return CorrelationGrid(k.order, "full", np.broadcast_to(vals, shape).copy(), k.n_marks, grid)


def marks_to_difference(k: CorrelationGrid, grid: TorusGrid) -> CorrelationGrid:
    if k.representation != "marks" or k.order < 2:
        raise ValueError("need a marks layout of order >= 2")
    shape = CorrelationGrid.shape_for(k.order, "difference", k.n_marks, grid)
    vals = np.broadcast_to(k.values, shape).copy()
    return CorrelationGrid(k.order, "difference", vals, k.n_marks, grid)


def min_separation(grid: TorusGrid, order: int, representation: str) -> np.ndarray:
    """Smallest pairwise min-image distance between the points of each grid cell."""
    pts = point_index_arrays(grid, order, representation)
    n = grid.n_points
    ndim = grid.dim * spatial_slots(order, representation)
    best = np.full((1,) * ndim, np.inf)
    for i in range(order):
        for j in range(i + 1, order):
            d2 = 0
            for a in range(grid.dim):
                delta = (pts[i][a] - pts[j][a]) % n
                delta = np.minimum(delta, n - delta) * grid.spacing
                d2 = d2 + delta ** 2
            best = np.minimum(best, np.sqrt(d2))
    return best


def q_product(q: np.ndarray, order: int) -> np.ndarray:
    """prod_i q(s_i) as an array of shape (m,) * order."""
    out = np.ones((1,) * order)
    for i in range(order):
        shape = [1] * order
        shape[i] = q.size
        out = out * q.reshape(shape)
    return out


def factorial(n: int) -> int:
    return math.factorial(n)
