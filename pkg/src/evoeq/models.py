"""Catalog of first-order evolutionary systems and independent references.

Each catalog entry wires a spatial block from module spatial to a material
law from module matlaw, in the once-integrated arrangement: the stochastic
term (when present) is the left-point integral of the noise coefficient,
entering the right-hand side directly.  ``build`` turns a ModelSpec into an
EvoProblem; ``solve_model`` picks the matching driver and a certified
accretivity constant from the closed forms in ``certified_constant``.

The two reference solvers at the bottom cross-validate the heat and wave
entries through deliberately separate code paths: they share the sampled
path, the noise description, and the spatial mesh with the main route, but
evaluate their own recursions (sequential one-step Euler for heat, spectral
kernel convolutions for the wave), so agreement between the routes checks
the time/stochastic machinery rather than repeating it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.signal import fftconvolve
from scipy.sparse.linalg import splu

from .errors import ParameterError, ShapeError
from .matlaw import (
    MaterialLaw,
    block_indicator_law,
    fractional_diagonal_law,
    pencil_law,
)
from .noise import POINTWISE_CATALOG, SigmaSpec, WienerPath, affine_sigma, ito_integral
from .solver import EvoProblem, NonConvergenceError, SolveReport, solve_deterministic, solve_ivp, solve_multiplicative
from .spatial import (
    BlockOperator,
    SpaceDescriptor,
    apply_variable_coefficient,
    build_curl_pair,
    build_grad_div,
    build_laplacian_block,
    dirichlet_laplacian,
)
from .timegrid import TimeGrid, Trajectory, d0

__all__ = [
    "MODEL_NAMES",
    "ModelSpec",
    "assemble_block",
    "assemble_law",
    "build",
    "certified_constant",
    "component_profiles",
    "component_affine_sigma",
    "restrict_sigma",
    "pulse_forcing",
    "solve_model",
    "mild_wave_reference",
    "variational_heat_reference",
]

MODEL_NAMES = (
    "heat",
    "heat_varcoef",
    "wave_v1",
    "wave_v2",
    "schroedinger",
    "maxwell",
    "fractional",
    "mixed",
)

# models whose scalar row is algebraic and whose flux row carries the rate
_FLUX_RATE = {"heat", "heat_varcoef", "fractional"}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """One catalog entry plus its data: mesh, grid, coefficients, noise.

    Fields beyond (name, space, grid) matter only for the models that read
    them; build() rejects out-of-range values with per-model messages.
    sigma profiles span the full system dof (use component_profiles /
    component_affine_sigma to place noise on one component).
    """

    name: str
    space: SpaceDescriptor
    grid: TimeGrid
    alpha: float = 0.75                # fractional: time order is 1 + alpha
    epsilon: float = 1.0               # maxwell: permittivity
    mu_perm: float = 1.0               # maxwell: permeability
    zeta: float = 0.0                  # maxwell: conductivity
    coefficient: object = None         # heat_varcoef: positive a(x) on flux dofs
    region_bounds: tuple = (1.0 / 3.0, 2.0 / 3.0)  # mixed: axis-0 split fractions
    drift_name: Optional[str] = None   # schroedinger: catalog nonlinearity
    drift_l: float = 0.0               # schroedinger: its Lipschitz constant
    sigma: Optional[SigmaSpec] = None
    path: Optional[WienerPath] = None
    forcing: Optional[Trajectory] = None
    u0: Optional[np.ndarray] = None


def _negated(op: BlockOperator) -> BlockOperator:
    return BlockOperator(
        space=op.space, matrix=(-op.matrix).tocsr(), bc_tag=op.bc_tag, weight=op.weight
    )


def _check_name(name: str) -> None:
    if name not in MODEL_NAMES:
        raise ParameterError(
            f"unknown model {name!r}, choose from {', '.join(MODEL_NAMES)}"
        )


def _slice_len(sl: slice) -> int:
    return sl.stop - sl.start


def assemble_block(name: str, space: SpaceDescriptor) -> BlockOperator:
    """Spatial block of one catalog entry (sign convention included).

    heat/heat_varcoef pair the divergence row with an interior gradient;
    wave_v1 and mixed use the same pair negated; wave_v2 uses the
    second-order block in the gradient-weighted pairing; schroedinger is
    i times the interior second-order form on the scalar space alone;
    maxwell pairs the two curls; fractional uses the flux-side boundary
    condition (interior divergence, plain gradient).
    """
    _check_name(name)
    if name in ("heat", "heat_varcoef"):
        return build_grad_div(space, dirichlet_on_grad=True)
    if name in ("wave_v1", "mixed"):
        return _negated(build_grad_div(space, dirichlet_on_grad=True))
    if name == "wave_v2":
        return build_laplacian_block(space)
    if name == "schroedinger":
        k = dirichlet_laplacian(space)
        n = k.shape[0]
        return BlockOperator(
            space=space.with_layout({"u": slice(0, n)}),
            matrix=(1j * k).tocsr(),
            bc_tag="dirichlet",
        )
    if name == "maxwell":
        if space.dimension != 3:
            raise ParameterError(
                f"maxwell needs a 3d space, got dimension {space.dimension}"
            )
        return build_curl_pair(space)
    # fractional
    return build_grad_div(space, dirichlet_on_grad=False)


def _diag_pencil(diag0: np.ndarray, diag1: np.ndarray) -> MaterialLaw:
    return pencil_law(
        sp.diags(np.asarray(diag0, dtype=np.complex128)).tocsr(),
        sp.diags(np.asarray(diag1, dtype=np.complex128)).tocsr(),
    )


def _axis0_coordinates(shape: tuple, h0: float, axis0_on_cells: bool) -> np.ndarray:
    """Axis-0 coordinate of every dof of one component, in layout order."""
    idx0 = np.indices(shape)[0].ravel()
    return (idx0 + 0.5) * h0 if axis0_on_cells else (idx0 + 1.0) * h0


def _component_shapes(space: SpaceDescriptor, dirichlet: bool) -> tuple[tuple, list]:
    """Shapes of the scalar and per-axis flux components of a grad/div pair."""
    cells = space.n_cells
    inner = tuple(n - 1 for n in cells)
    if dirichlet:
        u_shape = inner
        q_shapes = [
            tuple(cells[b] if b == a else inner[b] for b in range(space.dimension))
            for a in range(space.dimension)
        ]
    else:
        u_shape = cells
        q_shapes = [
            tuple(inner[b] if b == a else cells[b] for b in range(space.dimension))
            for a in range(space.dimension)
        ]
    return u_shape, q_shapes


def _mixed_masks(space: SpaceDescriptor, bounds: tuple) -> tuple[np.ndarray, np.ndarray]:
    """0/1 masks of the mixed-type law: regions split along axis 0.

    The leftmost region evolves both components (wave form), the middle one
    puts the rate on the flux only (heat form), the right one is algebraic
    in both (elliptic form).
    """
    b1, b2 = (float(b) for b in bounds)
    if not (0.0 <= b1 <= b2 <= 1.0):
        raise ParameterError(
            f"region_bounds must satisfy 0 <= b1 <= b2 <= 1, got ({b1}, {b2})"
        )
    length = space.extent[0]
    h0 = space.h[0]
    u_shape, q_shapes = _component_shapes(space, dirichlet=True)

    def region(coords: np.ndarray) -> np.ndarray:
        # 0 = evolving pair, 1 = flux-rate, 2 = algebraic
        return np.where(coords < b1 * length, 0, np.where(coords < b2 * length, 1, 2))

    ru = region(_axis0_coordinates(u_shape, h0, axis0_on_cells=False))
    rq = np.concatenate(
        [
            region(_axis0_coordinates(shape, h0, axis0_on_cells=(a == 0)))
            for a, shape in enumerate(q_shapes)
        ]
    )
    mask0 = np.concatenate([(ru == 0), (rq == 0) | (rq == 1)]).astype(float)
    mask1 = np.concatenate([(ru == 1) | (ru == 2), (rq == 2)]).astype(float)
    return mask0, mask1


def assemble_law(spec: ModelSpec, block: BlockOperator) -> MaterialLaw:
    """Material law of one catalog entry, matched to the block layout."""
    name = spec.name
    lay = block.space.layout
    dof = block.dof
    if name == "heat":
        m0 = np.zeros(dof)
        m1 = np.zeros(dof)
        m0[lay["q"]] = 1.0
        m1[lay["u"]] = 1.0
        return _diag_pencil(m0, m1)
    if name == "heat_varcoef":
        if spec.coefficient is None:
            raise ParameterError("heat_varcoef needs a positive coefficient")
        return apply_variable_coefficient(spec.coefficient, block)
    if name in ("wave_v1", "wave_v2", "schroedinger"):
        return _diag_pencil(np.ones(dof), np.zeros(dof))
    if name == "maxwell":
        for label, value in (("epsilon", spec.epsilon), ("mu_perm", spec.mu_perm)):
            if not float(value) > 0.0:
                raise ParameterError(f"maxwell {label} must be positive, got {value}")
        if float(spec.zeta) < 0.0:
            raise ParameterError(f"maxwell zeta must be nonnegative, got {spec.zeta}")
        m0 = np.zeros(dof)
        m1 = np.zeros(dof)
        m0[lay["e"]] = float(spec.epsilon)
        m0[lay["h"]] = float(spec.mu_perm)
        m1[lay["e"]] = float(spec.zeta)
        return _diag_pencil(m0, m1)
    if name == "fractional":
        alphas = np.empty(dof)
        alphas[lay["u"]] = float(spec.alpha)
        alphas[lay["q"]] = 1.0
        return fractional_diagonal_law(alphas)
    # mixed
    mask0, mask1 = _mixed_masks(block.space, spec.region_bounds)
    return block_indicator_law(mask0, mask1)


def build(spec: ModelSpec) -> EvoProblem:
    """Wire a catalog entry into an EvoProblem.

    For schroedinger the noise must be state-independent (affine with zero
    linear part); its integral X enters through the discrete rate d0(X) on
    the right-hand side, which the one-step engine commutes with exactly,
    and the catalog nonlinearity becomes the problem's drift.  The drift's
    Lipschitz constant must stay below the grid's weight rate, which is
    exactly the contraction budget of the identity law.
    """
    _check_name(spec.name)
    block = assemble_block(spec.name, spec.space)
    law = assemble_law(spec, block)
    forcing = spec.forcing
    sigma, path = spec.sigma, spec.path
    drift = None
    lipschitz_drift = 0.0
    if spec.name == "schroedinger":
        if spec.drift_name is not None:
            if spec.drift_name not in POINTWISE_CATALOG:
                raise ParameterError(
                    f"unknown drift {spec.drift_name!r}, "
                    f"choose from {sorted(POINTWISE_CATALOG)}"
                )
            if not float(spec.drift_l) >= 0.0:
                raise ParameterError(f"drift_l must be nonnegative, got {spec.drift_l}")
            fn, fn_l = POINTWISE_CATALOG[spec.drift_name]
            scale = float(spec.drift_l)
            lipschitz_drift = scale * fn_l
            if lipschitz_drift >= spec.grid.nu:
                raise ParameterError(
                    f"drift Lipschitz constant {lipschitz_drift} must stay below "
                    f"the weight rate nu = {spec.grid.nu}"
                )

            def drift(values: np.ndarray, _fn=fn, _s=scale) -> np.ndarray:
                return _s * (_fn(values.real) + 1j * _fn(values.imag))

        if sigma is not None:
            if sigma.kind != "affine" or np.any(sigma.c1 != 0):
                raise ParameterError(
                    "schroedinger needs state-independent noise: affine sigma "
                    "with zero linear part"
                )
            if path is None:
                raise ParameterError("sigma and path must be given together")
            n = spec.grid.n_steps
            family = np.broadcast_to(
                sigma.c0[:, None, :], (sigma.n_modes, n, sigma.dof)
            )
            rate = d0(ito_integral(family, path))
            forcing = rate if forcing is None else forcing + rate
            sigma, path = None, None
        if forcing is None:
            forcing = Trajectory.zeros(spec.grid, block.dof)
    return EvoProblem(
        law=law,
        block=block,
        forcing=forcing,
        sigma=sigma,
        path=path,
        u0=spec.u0,
        drift=drift,
        lipschitz_drift=lipschitz_drift,
    )


def certified_constant(spec: ModelSpec, r: float) -> float:
    """Closed-form accretivity constant of the law on the disc B(r, r).

    These are the per-model lower bounds on Re <z^-1 M(z) x, x> for z in
    B(r, r); verify_coercivity measures the same quantity by sampling and
    must come out no smaller.
    """
    _check_name(spec.name)
    if not r > 0:
        raise ParameterError(f"disc parameter r must be positive, got {r}")
    inv = 1.0 / (2.0 * r)
    if spec.name in ("heat", "mixed"):
        return min(1.0, inv)
    if spec.name == "heat_varcoef":
        a = np.asarray(spec.coefficient, dtype=float)
        return min(1.0, inv / float(np.max(a)))
    if spec.name in ("wave_v1", "wave_v2", "schroedinger"):
        return inv
    if spec.name == "maxwell":
        return min(
            float(spec.epsilon) * inv + float(spec.zeta), float(spec.mu_perm) * inv
        )
    # fractional: the scalar row carries order alpha, the flux row order one
    alpha = float(spec.alpha)
    if alpha == 1.0:
        return inv
    row_u = (2.0 * r) ** (-alpha) * math.cos(alpha * math.pi / 2.0)
    return min(row_u, inv)


def component_profiles(
    block: BlockOperator, component: str, n_modes: int, amplitude: float = 1.0
) -> np.ndarray:
    """(n_modes, dof) profiles that are constant on one layout component."""
    lay = block.space.layout
    if component not in lay:
        raise ParameterError(
            f"component {component!r} not in layout {sorted(lay)}"
        )
    if n_modes < 1:
        raise ParameterError(f"n_modes must be >= 1, got {n_modes}")
    prof = np.zeros((n_modes, block.dof))
    prof[:, lay[component]] = float(amplitude)
    return prof


def component_affine_sigma(
    block: BlockOperator,
    component: str,
    lambdas,
    c0_amplitude: float,
    c1_scale: float,
    declared_l: Optional[float] = None,
) -> SigmaSpec:
    """Affine noise acting on one component: Z_k(u) = c0 + c1 * u there.

    The linear part is a diagonal matrix supported on the component, so the
    per-mode gain is exactly |c1_scale| and the noise-norm Lipschitz
    constant is |c1_scale| * sqrt(sum of the mode variances).
    """
    lam = np.asarray(lambdas, dtype=float)
    k = lam.shape[0]
    c0 = component_profiles(block, component, k, c0_amplitude)
    mask = np.zeros(block.dof)
    mask[block.space.layout[component]] = 1.0
    c1 = np.broadcast_to(np.diag(mask * float(c1_scale)), (k, block.dof, block.dof))
    if declared_l is None:
        declared_l = abs(float(c1_scale)) * math.sqrt(float(np.sum(lam)))
    return affine_sigma(c0, np.array(c1), declared_l, lam)


def restrict_sigma(sigma: SigmaSpec, lambdas, keep: slice) -> SigmaSpec:
    """The same noise coefficient on a sub-block of the state.

    Used to hand a system-level sigma to the scalar-space reference
    solvers; the declared constant carries over (restriction cannot grow
    the bound).
    """
    lam = np.asarray(lambdas, dtype=float)
    if sigma.kind == "affine":
        c1 = sigma.c1 if sigma.c1.ndim == 1 else sigma.c1[:, keep, keep]
        return affine_sigma(sigma.c0[:, keep], c1, sigma.lipschitz_L, lam)
    from .noise import pointwise_sigma

    return pointwise_sigma(
        sigma.func_name, sigma.profiles[:, keep], sigma.lipschitz_L, lam
    )


def pulse_forcing(
    block: BlockOperator,
    grid: TimeGrid,
    component: str,
    amplitude: float = 1.0,
    t_off: Optional[float] = None,
) -> Trajectory:
    """Constant forcing on one component, optionally switched off at t_off."""
    lay = block.space.layout
    if component not in lay:
        raise ParameterError(f"component {component!r} not in layout {sorted(lay)}")
    values = np.zeros((grid.n_steps, block.dof), dtype=np.complex128)
    on = np.ones(grid.n_steps, dtype=bool) if t_off is None else grid.times <= t_off
    values[on, lay[component]] = float(amplitude)
    return Trajectory(grid, values)


def solve_model(
    spec: ModelSpec,
    *,
    tol: float = 1e-8,
    max_iter: int = 40,
    r: Optional[float] = None,
) -> tuple[Trajectory, SolveReport]:
    """Build a catalog entry and run the driver its data calls for.

    The accretivity constant comes from certified_constant at the tightest
    admissible disc r = 1/(2 nu) unless a larger r is requested.
    """
    problem = build(spec)
    if r is None:
        r = 1.0 / (2.0 * spec.grid.nu)
    c = certified_constant(spec, r)
    if problem.u0 is not None:
        need_c = c if (problem.sigma is not None or problem.drift is not None) else None
        return solve_ivp(problem, c=need_c, tol=tol, max_iter=max_iter)
    if problem.sigma is None and problem.drift is None:
        u = solve_deterministic(problem.law, problem.block, problem.forcing)
        report = SolveReport(
            iterations=1,
            residual_history=(),
            contraction_est=0.0,
            nu_used=spec.grid.nu,
            c_used=c,
            q_bound=0.0,
        )
        return u, report
    return solve_multiplicative(problem, c=c, tol=tol, max_iter=max_iter)


# ------------------------------------------------------------- references

def _sigma_values(sigma: SigmaSpec, values: np.ndarray) -> np.ndarray:
    """(n_modes, n_rows, dof) noise coefficient along a state history.

    Local re-derivation for the reference solvers; deliberately not the
    main route's evaluator.
    """
    k = sigma.n_modes
    n, dof = values.shape
    if sigma.dof != dof:
        raise ShapeError(f"sigma has dof {sigma.dof}, state has dof {dof}")
    if sigma.kind == "affine":
        if sigma.c1.ndim == 1:
            return sigma.c0[:, None, :] + sigma.c1[:, None, None] * values[None, :, :]
        out = np.empty((k, n, dof), dtype=np.complex128)
        for i in range(k):
            out[i] = sigma.c0[i][None, :] + values @ sigma.c1[i].T
        return out
    fn = POINTWISE_CATALOG[sigma.func_name][0]
    g = fn(values.real) + 1j * fn(values.imag)
    return sigma.profiles[:, None, :] * g[None, :, :]


def _require_1d(space: SpaceDescriptor, what: str) -> None:
    if space.dimension != 1:
        raise ParameterError(f"{what} is one-dimensional, got dimension {space.dimension}")


def variational_heat_reference(
    space: SpaceDescriptor,
    sigma: Optional[SigmaSpec],
    path: WienerPath,
    forcing: Optional[Trajectory] = None,
) -> Trajectory:
    """Sequential one-step scheme for the scalar heat equation.

    Tests the weak formulation directly: at each node, solve
    (I + dt*K) u_n = u_{n-1} + dt*f_n + sum_k sqrt(lambda_k) sigma_k(u_{n-1})
    * increment_k(n), with the second-order form K on interior nodes and
    the noise coefficient frozen at the left node.  Shares the path and the
    noise description with the main route, but no solution machinery.
    """
    _require_1d(space, "the heat reference")
    grid = path.grid
    k = dirichlet_laplacian(space)
    n_u = k.shape[0]
    if forcing is not None and forcing.dof != n_u:
        raise ShapeError(f"forcing dof {forcing.dof} does not match {n_u} nodes")
    if sigma is not None and sigma.dof != n_u:
        raise ShapeError(f"sigma dof {sigma.dof} does not match {n_u} nodes")
    step_matrix = (sp.identity(n_u, format="csr") + grid.dt * k).astype(np.complex128)
    lu = splu(step_matrix.tocsc())
    sqlam = np.sqrt(path.lambdas)
    out = np.empty((grid.n_steps, n_u), dtype=np.complex128)
    prev = np.zeros(n_u, dtype=np.complex128)
    for n in range(grid.n_steps):
        rhs = prev.copy()
        if forcing is not None:
            rhs = rhs + grid.dt * forcing.values[n]
        if sigma is not None:
            rows = _sigma_values(sigma, prev[None, :])[:, 0, :]
            rhs = rhs + (sqlam * path.increments[n]) @ rows
        prev = lu.solve(rhs)
        out[n] = prev
    return Trajectory(grid, out)


def mild_wave_reference(
    space: SpaceDescriptor,
    sigma: SigmaSpec,
    path: WienerPath,
    tol: float = 1e-10,
    max_iter: int = 60,
) -> tuple[Trajectory, Trajectory]:
    """Spectral kernel recursion for the scalar wave equation.

    Expands in the eigenbasis of the interior second-order form and
    iterates the variation-of-constants formula with left-point increments:

        u(t_n) = sum_m<n sin(sqrt(mu)(t_n - t_m))/sqrt(mu) dS_m
        v(t_n) = sum_m<n cos(sqrt(mu)(t_n - t_m)) dS_m

    where dS_m projects sigma(u(t_m)) times the increment over
    (t_m, t_m+1] onto each mode.  Returns the displacement and velocity
    trajectories.  Independent of the one-step engine: dense eigensolve
    plus causal convolutions.
    """
    _require_1d(space, "the wave reference")
    grid = path.grid
    n = grid.n_steps
    k = dirichlet_laplacian(space).toarray().real
    mu, vecs = np.linalg.eigh(k)
    if mu[0] <= 0:
        raise ParameterError(f"second-order form must be positive, got {mu[0]}")
    n_u = k.shape[0]
    if sigma.dof != n_u:
        raise ShapeError(f"sigma dof {sigma.dof} does not match {n_u} nodes")
    root = np.sqrt(mu)
    lags = grid.dt * np.arange(n)
    sin_kernel = (np.sin(np.outer(lags, root)) / root[None, :])  # (n, J)
    cos_kernel = np.cos(np.outer(lags, root))
    cos_kernel[0, :] = 0.0  # strict left point: lag zero never contributes
    winc = path.increments * np.sqrt(path.lambdas)[None, :]  # (n, K)

    def modal_noise(values: np.ndarray) -> np.ndarray:
        rows = _sigma_values(sigma, values)              # (K, n, n_u)
        proj = np.einsum("kmd,dj->kmj", rows, vecs)      # (K, n, J)
        w = np.zeros((n, mu.shape[0]), dtype=np.complex128)
        if n > 1:
            w[: n - 1] = np.einsum("kmj,mk->mj", proj[:, : n - 1, :], winc[1:])
        return w

    u = np.zeros((n, n_u), dtype=np.complex128)
    w = modal_noise(u)
    for _ in range(max_iter):
        modal_u = fftconvolve(w, sin_kernel, axes=0)[:n]
        new = modal_u @ vecs.T
        delta = float(np.max(np.abs(new - u)))
        u = new
        if delta <= tol * max(1.0, float(np.max(np.abs(u)))):
            break
        w = modal_noise(u)
    else:
        raise NonConvergenceError(
            f"mild recursion did not settle in {max_iter} iterations "
            f"(last update {delta:.3e})",
            (),
        )
    modal_v = fftconvolve(modal_noise(u), cos_kernel, axes=0)[:n]
    v = modal_v @ vecs.T
    return Trajectory(grid, u), Trajectory(grid, v)
