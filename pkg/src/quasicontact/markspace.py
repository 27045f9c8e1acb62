"""Discrete mark space, mutation kernel and its Perron (Krein-Rutman) data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# kappa * r above this is treated as critical; guards the 1/r round trip.
CRITICAL_MARGIN = 1e-9


class ConvergenceError(RuntimeError):
    """Power iteration did not reach the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class SupercriticalError(ValueError):
    """kappa is at or above the critical value 1/r."""


@dataclass(frozen=True)
class MarkSpace:
    labels: tuple
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).ravel()
        labels = tuple(self.labels)
        if len(labels) < 1:
            raise ValueError("mark space needs at least one mark")
        if len(labels) != weights.size:
            raise ValueError(
                f"got {len(labels)} labels but {weights.size} weights")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("mark weights must be finite and strictly positive")
        weights.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return len(self.labels)

    @classmethod
    def point(cls) -> "MarkSpace":
        """The one-point mark space with unit mass (the unmarked model)."""
        return cls(labels=(0,), weights=np.ones(1))


@dataclass(frozen=True)
class MutationKernel:
    """Strictly positive kernel Q(s, s') on a MarkSpace.

    The operator is ``(Qh)(s) = sum_s' Q(s, s') h(s') nu(s')``; ``weighted``
    holds the matrix ``Q(s, s') nu(s')`` so the action is a plain matvec.
    """

    entries: np.ndarray
    markspace: MarkSpace

    def __post_init__(self):
        q = np.array(self.entries, dtype=float)
        m = self.markspace.size
        if q.shape != (m, m):
            raise ValueError(f"mutation matrix must be {m}x{m}, got {q.shape}")
        if not np.all(np.isfinite(q)) or np.any(q <= 0):
            raise ValueError("mutation kernel entries must be strictly positive")
        q.setflags(write=False)
        object.__setattr__(self, "entries", q)

    @property
    def size(self) -> int:
        return self.markspace.size

    @property
    def weighted(self) -> np.ndarray:
        return self.entries * self.markspace.weights[None, :]

    @property
    def weighted_adjoint(self) -> np.ndarray:
        return self.entries.T * self.markspace.weights[None, :]

    def offspring_weight(self) -> np.ndarray:
        """B(s') = sum_s Q(s, s') nu(s): total child-mark mass of a parent with mark s'."""
        return self.markspace.weights @ self.entries

    def scaled(self, factor: float) -> "MutationKernel":
        return MutationKernel(self.entries * factor, self.markspace)

    @classmethod
    def point(cls) -> "MutationKernel":
        return cls(np.ones((1, 1)), MarkSpace.point())


@dataclass(frozen=True)
class SpectralData:
    r: float
    q: np.ndarray
    q_adj: np.ndarray
    kappa_cr: float
    residual: float
    iterations: int = field(default=0, compare=False)


def apply_mutation(kernel: MutationKernel, h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape != (kernel.size,):
        raise ValueError(
            f"vector over marks must have length {kernel.size}, got shape {h.shape}")
    return kernel.weighted @ h


def _power_iteration(w: np.ndarray, tol: float, max_iter: int):
    x = np.ones(w.shape[0])
    x /= np.max(x)
    lam = 0.0
    residual = np.inf
    for it in range(1, max_iter + 1):
        y = w @ x
        lam = float(x @ y) / float(x @ x)
        residual = float(np.max(np.abs(y - lam * x))) / (abs(lam) * np.max(np.abs(x)))
        if residual <= tol:
            return lam, x, residual, it
        x = y / np.max(np.abs(y))
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} steps "
        f"(last relative residual {residual:.3e})", residual)


def krein_rutman(kernel: MutationKernel, tol: float = 1e-12,
                 max_iter: int = 10_000) -> SpectralData:
    """Principal eigenvalue r and positive eigenfunctions of Q and Q*.

    ``q`` is normalised so that ``sum_s q(s) nu(s) = 1``; ``q_adj`` is
    normalised the same way.  The residual is relative:
    ``|Qq - rq|_inf / (r |q|_inf)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    nu = kernel.markspace.weights
    r, q, res, it = _power_iteration(kernel.weighted, tol, max_iter)
    r_adj, q_adj, res_adj, it_adj = _power_iteration(kernel.weighted_adjoint, tol, max_iter)
    q = q / (q @ nu)
    q_adj = q_adj / (q_adj @ nu)
    if np.any(q <= 0) or np.any(q_adj <= 0):
        raise ConvergenceError("Perron vector is not strictly positive", max(res, res_adj))
    return SpectralData(r=r, q=q, q_adj=q_adj, kappa_cr=1.0 / r,
                        residual=max(res, res_adj), iterations=max(it, it_adj))


def renormalize(kernel: MutationKernel, kappa: float,
                spectral: SpectralData | None = None):
    """Absorb r into the kernel: returns (Q / r, kappa * r).

    Raises SupercriticalError unless ``kappa * r < 1``.
    """
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    spectral = spectral or krein_rutman(kernel)
    kappa_eff = kappa * spectral.r
    if kappa_eff >= 1.0 - CRITICAL_MARGIN:
        raise SupercriticalError(
            f"kappa={kappa!r} is not below kappa_cr={spectral.kappa_cr!r} "
            f"(kappa*r={kappa_eff!r}); only the subcritical regime is supported")
    return kernel.scaled(1.0 / spectral.r), kappa_eff
