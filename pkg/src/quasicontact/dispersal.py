"""Dispersal densities on R^d with closed-form characteristic functions.

Convention: ``char_fn(p) = integral exp(i p.u) alpha(u) du``.
All point arguments accept arrays whose last axis has length ``dim``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

WRAP_TAIL = 1e-12
_MAX_WRAP = 10_000


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def _unit_ball_volume(dim: int) -> float:
    # V_1 = 2, V_2 = pi, V_d = 2 pi / d * V_{d-2}; exact in low dimension
    vol = 2.0 if dim % 2 else math.pi
    for d in range(3 if dim % 2 else 4, dim + 1, 2):
        vol *= 2 * math.pi / d
    return vol


class DispersalKernel:
    """Interface shared by the supported families."""

    dim: int

    def density(self, u) -> np.ndarray:
        return self._density(_as_points(u, self.dim))

    def char_fn(self, p) -> np.ndarray:
        return self._char_fn(_as_points(p, self.dim))

    def moments(self):
        m, c = self._moments()
        if np.linalg.det(c) <= 0:
            raise ValueError("dispersal covariance is degenerate")
        return m, c

    @property
    def length_scale(self) -> float:
        """Largest standard deviation along any direction."""
        _, c = self._moments()
        return float(np.sqrt(np.max(np.linalg.eigvalsh(c))))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        n = 1 if size is None else size
        out = self._sample(rng, n)
        return out[0] if size is None else out

    def wrap_order(self, box: float) -> int:
        """Smallest J whose lattice sum neglects less than WRAP_TAIL."""
        raise NotImplementedError

    def wrapped_density(self, u, box: float) -> np.ndarray:
        """Periodised density sum_{|j|_inf <= J} alpha(u + L j) on the torus."""
        if box <= 0:
            raise ValueError("box side must be positive")
        u = _as_points(u, self.dim)
        centre = self._centre()
        # shift each point to the image nearest the kernel centre
        u0 = u - box * np.round((u - centre) / box)
        order = self.wrap_order(box)
        rng = np.arange(-order, order + 1)
        shifts = np.stack(np.meshgrid(*([rng] * self.dim), indexing="ij"), -1)
        shifts = shifts.reshape(-1, self.dim) * box
        return self._density(u0[..., None, :] + shifts).sum(-1)

    def _centre(self) -> np.ndarray:
        return np.zeros(self.dim)


@dataclass(frozen=True, eq=False)
class GaussianKernel(DispersalKernel):
    cov: np.ndarray
    mean: np.ndarray | None = None

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        dim = cov.shape[0]
        if cov.shape != (dim, dim) or not np.allclose(cov, cov.T):
            raise ValueError("Gaussian covariance must be a symmetric square matrix")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("Gaussian covariance must be positive definite")
        mean = np.zeros(dim) if self.mean is None else np.asarray(self.mean, float).reshape(dim)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "_prec", np.linalg.inv(cov))
        object.__setattr__(self, "_chol", np.linalg.cholesky(cov))
        object.__setattr__(
            self, "_norm", 1.0 / math.sqrt((2 * math.pi) ** dim * np.linalg.det(cov)))

    def _density(self, u):
        v = u - self.mean
        quad = np.einsum("...i,ij,...j->...", v, self._prec, v)
        return self._norm * np.exp(-0.5 * quad)

    def _char_fn(self, p):
        quad = np.einsum("...i,ij,...j->...", p, self.cov, p)
        return np.exp(1j * (p @ self.mean) - 0.5 * quad)

    def _moments(self):
        return self.mean.copy(), self.cov.copy()

    def _sample(self, rng, n):
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T

    def _centre(self):
        return self.mean

    def wrap_order(self, box):
        lam_min = float(np.min(np.linalg.eigvalsh(self._prec)))
        for order in range(1, _MAX_WRAP):
            # lattice points outside |j|_inf <= order sit at least (k - 1/2) L away
            tail = 0.0
            for k in range(order + 1, order + 200):
                shell = (2 * k + 1) ** self.dim - (2 * k - 1) ** self.dim
                term = shell * self._norm * math.exp(-0.5 * lam_min * ((k - 0.5) * box) ** 2)
                tail += term
                if term < 1e-300:
                    break
            if tail < WRAP_TAIL:
                return order
        raise ValueError(f"cannot bound the wrapped Gaussian tail for box side {box}")


@dataclass(frozen=True, eq=False)
class UniformBallKernel(DispersalKernel):
    dim: int
    radius: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if not self.radius > 0:
            raise ValueError("uniform-ball radius must be positive")
        object.__setattr__(self, "_height",
                           1.0 / (_unit_ball_volume(self.dim) * self.radius ** self.dim))

    def _density(self, u):
        r2 = np.sum(u * u, axis=-1)
        return np.where(r2 <= self.radius ** 2, self._height, 0.0)

    def _char_fn(self, p):
        z = np.sqrt(np.sum(p * p, axis=-1)) * self.radius
        nu = self.dim / 2
        zs = np.where(z == 0, 1.0, z)
        val = math.gamma(nu + 1) * (2.0 / zs) ** nu * special.jv(nu, zs)
        return np.where(z == 0, 1.0, val).astype(complex)

    def _moments(self):
        return np.zeros(self.dim), np.eye(self.dim) * self.radius ** 2 / (self.dim + 2)

    def _sample(self, rng, n):
        direction = rng.standard_normal((n, self.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radial = self.radius * rng.random(n) ** (1.0 / self.dim)
        return direction * radial[:, None]

    def wrap_order(self, box):
        return int(math.ceil(self.radius / box)) + 1


@dataclass(frozen=True, eq=False)
class UniformBoxKernel(DispersalKernel):
    half_widths: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.half_widths, dtype=float))
        if np.any(a <= 0):
            raise ValueError("uniform-box half-widths must be positive")
        object.__setattr__(self, "half_widths", a)
        object.__setattr__(self, "dim", a.size)
        object.__setattr__(self, "_height", 1.0 / np.prod(2 * a))

    def _density(self, u):
        inside = np.all(np.abs(u) <= self.half_widths, axis=-1)
        return np.where(inside, self._height, 0.0)

    def _char_fn(self, p):
        return np.prod(np.sinc(p * self.half_widths / np.pi), axis=-1).astype(complex)

    def _moments(self):
        return np.zeros(self.dim), np.diag(self.half_widths ** 2 / 3.0)

    def _sample(self, rng, n):
        return (2 * rng.random((n, self.dim)) - 1) * self.half_widths

    def wrap_order(self, box):
        return int(math.ceil(np.max(self.half_widths) / box)) + 1


def density(kernel: DispersalKernel, u):
    return kernel.density(u)


def char_fn(kernel: DispersalKernel, p):
    return kernel.char_fn(p)


def moments(kernel: DispersalKernel):
    return kernel.moments()


def sample(kernel: DispersalKernel, rng: np.random.Generator, size: int | None = None):
    return kernel.sample(rng, size)


def wrapped_density(kernel: DispersalKernel, u, box: float):
    return kernel.wrapped_density(u, box)


def from_dict(desc: dict, dim: int) -> DispersalKernel:
    """Build a kernel from a config block such as ``{family: gaussian, cov: ...}``."""
    family = desc.get("family")
    if family == "gaussian":
        cov = desc.get("cov")
        if cov is None:
            cov = np.eye(dim) * float(desc.get("variance", 1.0))
        kernel = GaussianKernel(cov=cov, mean=desc.get("mean"))
    elif family == "uniform_ball":
        kernel = UniformBallKernel(dim=dim, radius=float(desc["radius"]))
    elif family == "uniform_box":
        kernel = UniformBoxKernel(half_widths=desc["half_widths"])
    else:
        raise ValueError(f"unknown dispersal family {family!r}")
    if kernel.dim != dim:
        raise ValueError(f"dispersal kernel has dimension {kernel.dim}, model has {dim}")
    return kernel


def to_dict(kernel: DispersalKernel) -> dict:
    if isinstance(kernel, GaussianKernel):
        return {"family": "gaussian", "cov": kernel.cov.tolist(), "mean": kernel.mean.tolist()}
    if isinstance(kernel, UniformBallKernel):
        return {"family": "uniform_ball", "radius": float(kernel.radius)}
    if isinstance(kernel, UniformBoxKernel):
        return {"family": "uniform_box", "half_widths": kernel.half_widths.tolist()}
    raise TypeError(type(kernel))
