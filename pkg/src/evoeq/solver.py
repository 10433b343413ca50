"""Causal one-step marching and the fixed-point driver.

The linear engine solves (d0 M(d0_inv) + A) u = rhs step by step: pencil
laws reduce to one sparse factorization plus a short recurrence, fractional
diagonal laws to the same factorization plus a growing history sum (cost
quadratic in n_steps, like the underlying convolution).  Nothing in the
march reads the weight rate nu, so the computed trajectory is identical on
grids that differ only in nu; nu enters through norms and contraction
budgets alone.

The stochastic drivers restate everything as right-hand sides for that one
engine.  The equation being solved is the once-integrated form, so a noise
coefficient sigma contributes its left-point integral directly to the
right-hand side, and an initial state enters as the history vector of the
first step.  The fixed-point gain is budgeted as
q = (L_sigma / sqrt(2 nu) + L_drift) / c; the driver refuses to iterate
when that budget reaches one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ParameterError, ShapeError
from .matlaw import MaterialLaw
from .noise import SigmaSpec, WienerPath, evaluate_sigma, ito_integral
from .spatial import BlockOperator
from .timegrid import TimeGrid, Trajectory, d0, d0_inv, gl_weights, weighted_norm

__all__ = [
    "EvoProblem",
    "SolveReport",
    "SolverError",
    "NonConvergenceError",
    "march",
    "solve_deterministic",
    "solve_additive",
    "solve_multiplicative",
    "solve_ivp",
]


class SolverError(RuntimeError):
    """The time-step system could not be factorized or applied."""


class NonConvergenceError(RuntimeError):
    """Fixed-point iteration ran out of iterations.

    Carries the residual history so callers can report how the iteration
    was trending when it gave up.
    """

    def __init__(self, message: str, residual_history: tuple) -> None:
        super().__init__(message)
        self.residual_history = residual_history


@dataclass(frozen=True)
class SolveReport:
    """What a solve did and which budget it ran under."""

    iterations: int
    residual_history: tuple        # weighted norms of successive updates
    contraction_est: float         # max successive residual ratio, 0 if n/a
    nu_used: float
    c_used: Optional[float]        # accretivity constant behind q_bound
    q_bound: float                 # budgeted contraction factor, 0 if linear
    distributional_order: int = 0  # k when the data needed k extra d0 powers
    attainment_error: Optional[float] = None  # |M0 (u_0 - u0)| for state solves


@dataclass(frozen=True, eq=False)
class EvoProblem:
    """One causal system: material law, skew block, data, and noise.

    drift, when present, must act row by row (the value at step n may only
    read the state at step n); that keeps the fixed-point map causal.  Its
    declared Lipschitz constant lipschitz_drift enters the contraction
    budget next to sigma's declared constant.
    """

    law: MaterialLaw
    block: BlockOperator
    forcing: Optional[Trajectory] = None
    sigma: Optional[SigmaSpec] = None
    path: Optional[WienerPath] = None
    u0: Optional[np.ndarray] = None
    drift: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lipschitz_drift: float = 0.0

    def __post_init__(self) -> None:
        if self.law.dof != self.block.dof:
            raise ShapeError(
                f"law dof {self.law.dof} != block dof {self.block.dof}"
            )
        if self.forcing is None and self.path is None:
            raise ParameterError("need a forcing trajectory or a noise path")
        if self.forcing is not None and self.forcing.dof != self.law.dof:
            raise ShapeError(
                f"forcing dof {self.forcing.dof} != law dof {self.law.dof}"
            )
        if (self.sigma is None) != (self.path is None):
            raise ParameterError("sigma and path must be supplied together")
        if self.sigma is not None:
            if self.sigma.dof != self.law.dof:
                raise ShapeError(
                    f"sigma dof {self.sigma.dof} != law dof {self.law.dof}"
                )
            if self.sigma.n_modes != self.path.n_modes:
                raise ShapeError(
                    f"sigma has {self.sigma.n_modes} modes, "
                    f"path has {self.path.n_modes}"
                )
            if self.forcing is not None and self.path.grid != self.forcing.grid:
                raise ShapeError("forcing and path grids differ")
        if self.u0 is not None and np.shape(self.u0) != (self.law.dof,):
            raise ShapeError(
                f"u0 must have shape ({self.law.dof},), got {np.shape(self.u0)}"
            )
        if self.lipschitz_drift < 0:
            raise ParameterError("lipschitz_drift must be nonnegative")
        if self.drift is None and self.lipschitz_drift != 0.0:
            raise ParameterError("lipschitz_drift without a drift callable")

    @property
    def grid(self) -> TimeGrid:
        return self.forcing.grid if self.forcing is not None else self.path.grid

    def forcing_values(self) -> np.ndarray:
        if self.forcing is not None:
            return self.forcing.values
        return np.zeros((self.grid.n_steps, self.law.dof), dtype=np.complex128)


def _factorize(matrix: sp.spmatrix, dof: int):
    try:
        return splu(matrix.tocsc())
    except RuntimeError as exc:
        extra = ""
        if dof <= 1024:
            smin = np.linalg.svd(matrix.toarray(), compute_uv=False)[-1]
            extra = f" (smallest singular value {smin:.3e})"
        raise SolverError(f"time-step matrix cannot be factorized{extra}: {exc}")


def march(
    law: MaterialLaw,
    block: BlockOperator,
    rhs: np.ndarray,
    grid: TimeGrid,
    history: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Advance (d0 M(d0_inv) + A) u = rhs through all steps.

    Args:
        law: material law; pencil and indicator laws march with a single
            history vector, fractional laws with the full weight tail.
        block: skew spatial block A.
        rhs: (n_steps, dof) right-hand side rows.
        grid: supplies dt and n_steps (nu is never read).
        history: optional state before the first step; pencil-type laws
            only.  None means zero history.

    Returns:
        (n_steps, dof) complex solution values.
    """
    rhs = np.asarray(rhs, dtype=np.complex128)
    n, dof = grid.n_steps, law.dof
    if rhs.shape != (n, dof):
        raise ShapeError(f"rhs must be ({n}, {dof}), got {rhs.shape}")
    if block.dof != dof:
        raise ShapeError(f"block dof {block.dof} != law dof {dof}")
    dt = grid.dt
    out = np.empty((n, dof), dtype=np.complex128)

    if law.variant == "fractional_diagonal":
        if history is not None:
            raise ParameterError(
                "initial-state solves need a pencil-type law; fractional "
                "memory does not reduce to one history vector"
            )
        scale = law.coeffs * dt ** (-law.alphas)  # (dof,)
        lu = _factorize(sp.diags(scale) + block.matrix, dof)
        weight_by_alpha = {
            a: gl_weights(a, n) for a in np.unique(law.alphas)
        }
        groups = [
            (np.flatnonzero(law.alphas == a), weight_by_alpha[a])
            for a in np.unique(law.alphas)
        ]
        for i in range(n):
            tail = np.zeros(dof, dtype=np.complex128)
            if i > 0:
                past = out[i - 1 :: -1]  # rows u_{i-1} .. u_0, i.e. u_{i-j}
                for idx, g in groups:
                    tail[idx] = g[1 : i + 1] @ past[:, idx]
            out[i] = lu.solve(rhs[i] - scale * tail)
        return out

    m0, m1 = law.pencil_parts()
    lu = _factorize(m0 / dt + m1 + block.matrix, dof)
    prev = (
        np.zeros(dof, dtype=np.complex128)
        if history is None
        else np.asarray(history, dtype=np.complex128)
    )
    if prev.shape != (dof,):
        raise ShapeError(f"history must have shape ({dof},), got {prev.shape}")
    for i in range(n):
        out[i] = lu.solve(rhs[i] + (m0 @ prev) / dt)
        prev = out[i]
    return out


def solve_deterministic(
    law: MaterialLaw, block: BlockOperator, forcing: Trajectory
) -> Trajectory:
    """Solve the linear system with zero history and the given forcing."""
    values = march(law, block, forcing.values, forcing.grid)
    return Trajectory(forcing.grid, values)


def solve_additive(
    law: MaterialLaw,
    block: BlockOperator,
    forcing: Optional[Trajectory],
    x_noise: Trajectory,
    k_order: int = 1,
) -> tuple[Trajectory, SolveReport]:
    """Solve with additive rough data entering as the k-th rate of x_noise.

    The right-hand side is forcing + d0^k x_noise, where x_noise is a
    genuine trajectory (an integrated process) but its k-th rate is only a
    distribution.  The solve runs on the smoothed system: w solves the
    linear problem with data d0_inv^k forcing + x_noise, and the returned
    solution is d0^k w, which the one-step engine commutes with exactly.

    Args:
        law: material law.
        block: skew spatial block.
        forcing: optional smooth forcing; None means zero.
        x_noise: integrated rough data, e.g. an Ito integral.
        k_order: how many d0 powers the data assumes (>= 1).

    Returns:
        (solution, report); the report records distributional_order=k_order.
    """
    if k_order < 1:
        raise ParameterError(f"k_order must be >= 1, got {k_order}")
    grid = x_noise.grid
    if forcing is not None and forcing.grid != grid:
        raise ShapeError("forcing and x_noise grids differ")
    smoothed = x_noise
    if forcing is not None:
        extra = forcing
        for _ in range(k_order):
            extra = d0_inv(extra)
        smoothed = smoothed + extra
    w = Trajectory(grid, march(law, block, smoothed.values, grid))
    u = w
    for _ in range(k_order):
        u = d0(u)
    report = SolveReport(
        iterations=1,
        residual_history=(),
        contraction_est=0.0,
        nu_used=grid.nu,
        c_used=None,
        q_bound=0.0,
        distributional_order=k_order,
    )
    return u, report


def _q_bound(problem: EvoProblem, c: float, nu: float) -> float:
    l_sigma = problem.sigma.lipschitz_L if problem.sigma is not None else 0.0
    return (l_sigma / np.sqrt(2.0 * nu) + problem.lipschitz_drift) / c


def _picard(
    problem: EvoProblem,
    c: float,
    tol: float,
    max_iter: int,
    history: Optional[np.ndarray],
) -> tuple[Trajectory, tuple, float, float]:
    grid = problem.grid
    if c <= 0:
        raise ParameterError(f"accretivity constant must be positive, got {c}")
    q = _q_bound(problem, c, grid.nu)
    if q >= 1.0:
        raise ParameterError(
            f"contraction budget q = {q:.3f} >= 1; increase the grid weight "
            f"rate nu, reduce the noise or drift gain, or certify a larger c"
        )
    base = problem.forcing_values()
    u = Trajectory.zeros(grid, problem.law.dof)
    residuals: list[float] = []
    for _ in range(max_iter):
        rhs = base.copy()
        if problem.drift is not None:
            rhs += problem.drift(u.values)
        if problem.sigma is not None:
            z = evaluate_sigma(problem.sigma, u)
            rhs += ito_integral(z, problem.path).values
        new = Trajectory(grid, march(problem.law, problem.block, rhs, grid, history))
        resid = weighted_norm(new - u)
        residuals.append(resid)
        u = new
        if resid <= tol * max(1.0, weighted_norm(u)):
            ratios = [
                residuals[i] / residuals[i - 1]
                for i in range(1, len(residuals))
                if residuals[i - 1] > tol
            ]
            return u, tuple(residuals), (max(ratios) if ratios else 0.0), q
    raise NonConvergenceError(
        f"no convergence in {max_iter} iterations "
        f"(last residual {residuals[-1]:.3e}, budget q = {q:.3f})",
        tuple(residuals),
    )


def solve_multiplicative(
    problem: EvoProblem,
    *,
    c: float,
    tol: float = 1e-8,
    max_iter: int = 40,
) -> tuple[Trajectory, SolveReport]:
    """Fixed-point solve with state-dependent noise and drift.

    Iterates u -> solve(forcing + drift(u) + integral of sigma(u) dW),
    starting from zero, until the weighted norm of the update falls below
    tol (relative to max(1, |u|)).

    Args:
        problem: system description; sigma and path drive the noise term.
        c: certified accretivity constant of the law on the relevant disc,
            e.g. from verify_coercivity.
        tol: relative update tolerance.
        max_iter: iteration cap; exceeding it raises NonConvergenceError.

    Returns:
        (solution, report) with the budget q and measured contraction.
    """
    u, residuals, contraction, q = _picard(problem, c, tol, max_iter, None)
    report = SolveReport(
        iterations=len(residuals),
        residual_history=residuals,
        contraction_est=contraction,
        nu_used=problem.grid.nu,
        c_used=c,
        q_bound=q,
    )
    return u, report


def solve_ivp(
    problem: EvoProblem,
    *,
    c: Optional[float] = None,
    tol: float = 1e-8,
    max_iter: int = 40,
) -> tuple[Trajectory, SolveReport]:
    """Solve with an initial state instead of zero history.

    The state enters as the history vector of the first step, which is the
    causal substitution u = v + (state held for t >= 0) in discrete form.
    The report's attainment_error records |M0 (u_0 - u0)|, which shrinks
    like dt for compatible data.

    Args:
        problem: must carry u0; pencil-type laws only.
        c: accretivity constant, required when sigma is present.
        tol: relative update tolerance for the stochastic case.
        max_iter: iteration cap for the stochastic case.

    Returns:
        (solution, report).
    """
    if problem.u0 is None:
        raise ParameterError("solve_ivp needs an initial state u0")
    u0 = np.asarray(problem.u0, dtype=np.complex128)
    grid = problem.grid
    if problem.sigma is None and problem.drift is None:
        values = march(problem.law, problem.block, problem.forcing_values(), grid, u0)
        u = Trajectory(grid, values)
        residuals: tuple = ()
        contraction, q, c_used = 0.0, 0.0, c
        iterations = 1
    else:
        if c is None:
            raise ParameterError("stochastic initial-state solves need c")
        u, residuals, contraction, q = _picard(problem, c, tol, max_iter, u0)
        c_used = c
        iterations = len(residuals)
    m0, _ = problem.law.pencil_parts()
    attainment = float(np.linalg.norm(m0 @ (u.values[0] - u0)))
    report = SolveReport(
        iterations=iterations,
        residual_history=residuals,
        contraction_est=contraction,
        nu_used=grid.nu,
        c_used=c_used,
        q_bound=q,
        attainment_error=attainment,
    )
    return u, report
