"""Causal calculus on a uniform time grid with an exponential weight.

All norms carry the weight exp(-2*nu*t).  The backward difference ``d0``
and the causal cumulative sum ``d0_inv`` are exact algebraic inverses of
each other on trajectories with zero history (nothing before the first
node).  ``d0_frac`` interpolates between them through Grunwald-Letnikov
weights; the convolution is evaluated directly (quadratic in the number
of steps), which is fine at the problem sizes this package targets.

Conventions
- values are complex128 arrays of shape (n_steps, dof)
- history is zero: u_{-1} = 0, so (d0 u)_0 = u_0 / dt
- the weighted norm uses the left-rectangle rule on the nodes
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "TimeGrid",
    "Trajectory",
    "weighted_norm",
    "d0",
    "d0_inv",
    "d0_frac",
    "gl_weights",
    "gl_convolve",
    "fourier_laplace_diag",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = t0 + n*dt, n = 0 .. n_steps-1, with weight rate nu."""

    dt: float       # step size, > 0
    n_steps: int    # number of nodes, >= 1
    nu: float       # weight rate in exp(-2*nu*t), > 0
    t0: float = 0.0  # first node; experiments start at 0

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ParameterError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.nu > 0:
            raise ParameterError(f"nu must be positive, got {self.nu}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps)

    def weights(self) -> np.ndarray:
        """Node weights exp(-2*nu*t_n) of the squared norm."""
        return np.exp(-2.0 * self.nu * self.times)

    def with_nu(self, nu: float) -> "TimeGrid":
        return TimeGrid(self.dt, self.n_steps, nu, self.t0)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Complex samples on a TimeGrid, one row per node."""

    grid: TimeGrid
    values: np.ndarray  # (n_steps, dof) complex128

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 2:
            raise ShapeError(f"values must be 2d (n_steps, dof), got ndim={values.ndim}")
        if values.shape[0] != self.grid.n_steps:
            raise ShapeError(
                f"values has {values.shape[0]} rows, grid has {self.grid.n_steps} nodes"
            )
        object.__setattr__(self, "values", values)

    @property
    def dof(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid: TimeGrid, dof: int) -> "Trajectory":
        if dof < 1:
            raise ParameterError(f"dof must be >= 1, got {dof}")
        return cls(grid, np.zeros((grid.n_steps, dof), dtype=np.complex128))

    def copy(self) -> "Trajectory":
        return Trajectory(self.grid, self.values.copy())

    def _check_compatible(self, other: "Trajectory") -> None:
        if self.grid != other.grid:
            raise ShapeError("trajectories live on different grids")
        if self.values.shape != other.values.shape:
            raise ShapeError(
                f"dof mismatch: {self.values.shape[1]} vs {other.values.shape[1]}"
            )

    def __add__(self, other: "Trajectory") -> "Trajectory":
        self._check_compatible(other)
        return Trajectory(self.grid, self.values + other.values)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        self._check_compatible(other)
        return Trajectory(self.grid, self.values - other.values)

    def __mul__(self, scalar: complex) -> "Trajectory":
        return Trajectory(self.grid, self.values * scalar)

    __rmul__ = __mul__


def weighted_norm(u: Trajectory) -> float:
    """Weighted space-time norm of a trajectory.

    Returns sqrt(dt * sum_n exp(-2*nu*t_n) * ||u_n||^2), the left-rectangle
    discretization of the exponentially weighted L2 norm in time.
    """
    row_sq = np.einsum("nd,nd->n", np.abs(u.values), np.abs(u.values))
    return float(np.sqrt(u.grid.dt * np.dot(u.grid.weights(), row_sq)))


def d0(u: Trajectory) -> Trajectory:
    """Backward difference with zero history: (d0 u)_n = (u_n - u_{n-1}) / dt."""
    diff = np.empty_like(u.values)
    diff[0] = u.values[0]
    diff[1:] = u.values[1:] - u.values[:-1]
    return Trajectory(u.grid, diff / u.grid.dt)


def d0_inv(u: Trajectory) -> Trajectory:
    """Causal cumulative sum: (d0_inv u)_n = dt * sum_{k <= n} u_k."""
    return Trajectory(u.grid, u.grid.dt * np.cumsum(u.values, axis=0))


def gl_weights(order: float, n: int) -> np.ndarray:
    """First n Grunwald-Letnikov weights for the given differentiation order.

    g_0 = 1 and g_j = g_{j-1} * (1 - (order + 1) / j).  Negative orders give
    the weights of the corresponding fractional integral.  The generating
    function is (1 - x)**order, so weights of two orders convolve exactly to
    the weights of the sum of the orders.
    """
    if n < 1:
        raise ParameterError(f"need n >= 1 weights, got {n}")
    w = np.empty(n)
    w[0] = 1.0
    if n > 1:
        j = np.arange(1, n)
        w[1:] = np.cumprod(1.0 - (order + 1.0) / j)
    return w


def gl_convolve(values: np.ndarray, order: float, dt: float) -> np.ndarray:
    """Apply the Grunwald-Letnikov operator of the given order columnwise.

    out_n = dt**(-order) * sum_{j <= n} g_j * values_{n-j}

    Direct (quadratic) convolution, causal by construction.  Positive order
    differentiates, negative order integrates, order 0 is the identity.
    """
    values = np.asarray(values)
    n = values.shape[0]
    g = gl_weights(order, n)
    out = np.empty_like(values, dtype=np.complex128)
    for c in range(values.shape[1]):
        out[:, c] = np.convolve(g, values[:, c])[:n]
    out /= dt**order
    return out


def d0_frac(u: Trajectory, alpha: float) -> Trajectory:
    """Fractional backward difference of order alpha in (0, 2).

    alpha = 1 reproduces d0 exactly (the weights collapse to 1, -1, 0, ...).

    Args:
        u: trajectory with zero history.
        alpha: differentiation order, must satisfy 0 < alpha < 2.

    Returns:
        Trajectory of the same shape.
    """
    if not 0.0 < alpha < 2.0:
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha}")
    return Trajectory(u.grid, gl_convolve(u.values, alpha, u.grid.dt))


def fourier_laplace_diag(u: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Discrete Fourier-Laplace coefficients of a trajectory, per column.

    Damps the samples by exp(-nu*t_n) and takes the DFT with the
    1/sqrt(2*pi) normalization, so the output approximates the weighted
    transform evaluated at the frequencies xi_k returned alongside.
    Diagnostic only: on a long grid the ratio of transformed d0_inv(u) to
    transformed u approaches 1 / (i*xi + nu).

    Returns:
        (xi, coeffs) where xi has length n_steps and coeffs has shape
        (n_steps, dof).
    """
    damp = np.exp(-u.grid.nu * u.grid.times)
    coeffs = (u.grid.dt / np.sqrt(2.0 * np.pi)) * np.fft.fft(
        u.values * damp[:, None], axis=0
    )
    xi = 2.0 * np.pi * np.fft.fftfreq(u.grid.n_steps, d=u.grid.dt)
    return xi, coeffs
