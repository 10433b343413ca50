"""Cylinder-process sampling and the left-point stochastic integral.

A path carries per-mode variances lambda_k, Normal(0, dt) increments, and
one spatial embedding row per mode.  The integral against an adapted family
Z evaluates Z at the left endpoint: the increment over (t_m, t_{m+1}]
multiplies Z at t_m, weighted by sqrt(lambda_k) per mode.  The output at
the first node is exactly zero and row n depends only on data up to step n,
so causality and adaptedness are structural, not approximate.

The squared noise norm of a family Z is sum_k lambda_k * ||Z_k||^2 in the
weighted trajectory norm; with that convention the continuum isometry
constant is exactly 1/(2*nu), and the backward-grid expectation carries the
documented bias factor rho(dt) = 2*nu*dt*exp(-2*nu*dt)/(1 - exp(-2*nu*dt)),
which is 1 - nu*dt + O(dt^2).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError, ShapeError
from .timegrid import TimeGrid, Trajectory, weighted_norm

__all__ = [
    "WienerPath",
    "SigmaSpec",
    "IsometryReport",
    "lambda_sequence",
    "sample_path",
    "coarsen_path",
    "constant_family",
    "affine_sigma",
    "pointwise_sigma",
    "evaluate_sigma",
    "sigma_lipschitz_bound",
    "noise_norm",
    "ito_integral",
    "isometry_bias_factor",
    "verify_ito_isometry",
]


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Sampled increments of a diagonal cylinder process.

    increments[n] is the Normal(0, dt) draw over (t_{n-1}, t_n]; rows whose
    interval ends at or before time zero are forced to zero, because the
    process carries no mass on (-inf, 0].
    """

    grid: TimeGrid
    lambdas: np.ndarray     # (K,) nonnegative, summable in spirit
    increments: np.ndarray  # (n_steps, K)
    embedding: np.ndarray   # (K, dof) spatial shape of each mode

    def __post_init__(self) -> None:
        lam = np.asarray(self.lambdas, dtype=float)
        inc = np.asarray(self.increments, dtype=float)
        emb = np.asarray(self.embedding, dtype=np.complex128)
        if lam.ndim != 1:
            raise ShapeError("lambdas must be 1d")
        if np.any(lam < 0.0) or not np.all(np.isfinite(lam)):
            bad = lam[(lam < 0.0) | ~np.isfinite(lam)][0]
            raise ParameterError(f"mode variances must be finite and >= 0, got {bad}")
        if inc.shape != (self.grid.n_steps, lam.shape[0]):
            raise ShapeError(
                f"increments must be (n_steps, n_modes) = "
                f"({self.grid.n_steps}, {lam.shape[0]}), got {inc.shape}"
            )
        if emb.ndim != 2 or emb.shape[0] != lam.shape[0]:
            raise ShapeError(f"embedding must be (n_modes, dof), got {emb.shape}")
        prehistory = self.grid.times <= 0.0
        if np.any(inc[prehistory] != 0.0):
            raise ParameterError("increments covering times <= 0 must vanish")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "embedding", emb)

    @property
    def n_modes(self) -> int:
        return self.lambdas.shape[0]

    @property
    def dof(self) -> int:
        return self.embedding.shape[1]

    def brownian(self) -> np.ndarray:
        """Per-mode path values at the nodes (cumulative increments)."""
        return np.cumsum(self.increments, axis=0)


def lambda_sequence(name: str, n_modes: int) -> tuple[np.ndarray, float]:
    """Built-in mode variance sequences with their truncation tail mass.

    "inverse_square" gives lambda_k = k**-2 (tail pi^2/6 - partial sum),
    "dyadic" gives lambda_k = 2**-k (tail 2**-K).
    """
    if n_modes < 1:
        raise ParameterError(f"n_modes must be >= 1, got {n_modes}")
    k = np.arange(1, n_modes + 1, dtype=float)
    if name == "inverse_square":
        lam = k**-2.0
        tail = math.pi**2 / 6.0 - float(np.sum(lam))
    elif name == "dyadic":
        lam = 2.0**-k
        tail = 2.0 ** -float(n_modes)
    else:
        raise ParameterError(f"unknown variance sequence {name!r}")
    return lam, tail


def sample_path(
    grid: TimeGrid,
    n_modes: int,
    lambdas,
    embedding,
    seed,
) -> WienerPath:
    """Draw one path of increments, deterministic for a fixed seed.

    Args:
        grid: time grid; increments covering times <= 0 are zeroed.
        n_modes: number of modes, must match len(lambdas).
        lambdas: nonnegative per-mode variances.
        embedding: (n_modes, dof) spatial mode shapes.
        seed: anything numpy's default_rng accepts (int, SeedSequence, ...).
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape != (n_modes,):
        raise ShapeError(f"lambdas must have length n_modes={n_modes}, got {lam.shape}")
    rng = np.random.default_rng(seed)
    inc = rng.normal(0.0, math.sqrt(grid.dt), size=(grid.n_steps, n_modes))
    inc[grid.times <= 0.0] = 0.0
    return WienerPath(grid=grid, lambdas=lam, increments=inc, embedding=np.asarray(embedding))


def coarsen_path(path: WienerPath, factor: int) -> WienerPath:
    """The same Brownian path on a grid coarsened by an integer factor.

    Pairwise-sums consecutive increments, so refinement studies can compare
    step sizes on one underlying path.  The never-consumed first row is
    rescaled to keep its variance at the coarse dt.
    """
    if factor < 1 or path.grid.n_steps % factor != 0:
        raise ParameterError(
            f"factor {factor} must divide n_steps {path.grid.n_steps}"
        )
    if factor == 1:
        return path
    grid = path.grid
    coarse_grid = TimeGrid(grid.dt * factor, grid.n_steps // factor, grid.nu, grid.t0)
    inc = path.increments
    coarse = np.empty((coarse_grid.n_steps, path.n_modes))
    coarse[0] = math.sqrt(factor) * inc[0]
    for n in range(1, coarse_grid.n_steps):
        lo = (n - 1) * factor + 1
        coarse[n] = inc[lo : lo + factor].sum(axis=0)
    return WienerPath(
        grid=coarse_grid, lambdas=path.lambdas, increments=coarse, embedding=path.embedding
    )


def constant_family(path: WienerPath) -> np.ndarray:
    """The integrand family whose integral is the process itself.

    Z_k constant equal to the k-th embedding row, shape (K, n_steps, dof).
    """
    k, dof = path.embedding.shape
    out = np.empty((k, path.grid.n_steps, dof), dtype=np.complex128)
    out[:] = path.embedding[:, None, :]
    return out


# ------------------------------------------------------------------- sigma

def _cat_identity(x: np.ndarray) -> np.ndarray:
    return x


def _cat_sin(x: np.ndarray) -> np.ndarray:
    return np.sin(x)


def _cat_clipped_linear(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -1.0, 1.0)


# name -> (real function, Lipschitz constant of the real function)
POINTWISE_CATALOG: dict = {
    "identity": (_cat_identity, 1.0),
    "sin": (_cat_sin, 1.0),
    "clipped_linear": (_cat_clipped_linear, 1.0),
}


@dataclass(frozen=True, eq=False)
class SigmaSpec:
    """Noise coefficient description.

    kind "affine": Z_k(u) = c0_k + c1_k u (c1 scalar per mode or matrix).
    kind "pointwise_lipschitz": Z_k(u) = profile_k * g(u) with g from the
    built-in catalog applied to real and imaginary parts separately (that
    keeps the real Lipschitz constant on complex values).

    lipschitz_L is the declared bound on u -> Z(u) in the noise norm; the
    constructors verify it against the supplied mode variances.
    """

    kind: str
    lipschitz_L: float
    c0: Optional[np.ndarray] = None        # (K, dof)
    c1: Optional[np.ndarray] = None        # (K,) scalars or (K, dof, dof)
    func_name: Optional[str] = None        # catalog key
    profiles: Optional[np.ndarray] = None  # (K, dof)

    @property
    def n_modes(self) -> int:
        if self.kind == "affine":
            return self.c0.shape[0]
        return self.profiles.shape[0]

    @property
    def dof(self) -> int:
        if self.kind == "affine":
            return self.c0.shape[1]
        return self.profiles.shape[1]


def sigma_lipschitz_bound(spec: SigmaSpec, lambdas) -> float:
    """Computed Lipschitz constant of u -> Z(u) in the noise norm."""
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape != (spec.n_modes,):
        raise ShapeError(f"need {spec.n_modes} mode variances, got {lam.shape}")
    if spec.kind == "affine":
        if spec.c1.ndim == 1:
            per_mode = np.abs(spec.c1)
        else:
            per_mode = np.array(
                [np.linalg.svd(m, compute_uv=False)[0] for m in spec.c1]
            )
    else:
        lg = POINTWISE_CATALOG[spec.func_name][1]
        per_mode = lg * np.max(np.abs(spec.profiles), axis=1)
    return float(np.sqrt(np.sum(lam * per_mode**2)))


def _check_declared_l(spec: SigmaSpec, lambdas) -> SigmaSpec:
    actual = sigma_lipschitz_bound(spec, lambdas)
    if spec.lipschitz_L < actual * (1.0 - 1e-12):
        raise ParameterError(
            f"declared Lipschitz bound {spec.lipschitz_L} is below the computed "
            f"constant {actual:.6g}"
        )
    return spec


def affine_sigma(c0, c1, lipschitz_L: float, lambdas) -> SigmaSpec:
    """Affine noise coefficient Z_k(u) = c0_k + c1_k u.

    c1 may be per-mode scalars (length K) or per-mode matrices (K, dof, dof).
    The declared lipschitz_L must dominate the constant computed from the
    mode variances.
    """
    c0a = np.asarray(c0, dtype=np.complex128)
    c1a = np.asarray(c1, dtype=np.complex128)
    if c0a.ndim != 2:
        raise ShapeError(f"c0 must be (n_modes, dof), got {c0a.shape}")
    if c1a.ndim == 1:
        if c1a.shape[0] != c0a.shape[0]:
            raise ShapeError("scalar c1 needs one entry per mode")
    elif c1a.ndim == 3:
        if c1a.shape != (c0a.shape[0], c0a.shape[1], c0a.shape[1]):
            raise ShapeError(f"matrix c1 must be (n_modes, dof, dof), got {c1a.shape}")
    else:
        raise ShapeError("c1 must be per-mode scalars or per-mode matrices")
    if lipschitz_L < 0:
        raise ParameterError("lipschitz_L must be nonnegative")
    spec = SigmaSpec(kind="affine", lipschitz_L=float(lipschitz_L), c0=c0a, c1=c1a)
    return _check_declared_l(spec, lambdas)


def pointwise_sigma(func_name: str, profiles, lipschitz_L: float, lambdas) -> SigmaSpec:
    """Catalog noise coefficient Z_k(u) = profile_k * g(u), g applied cellwise."""
    if func_name not in POINTWISE_CATALOG:
        raise ParameterError(
            f"unknown catalog function {func_name!r}, "
            f"choose from {sorted(POINTWISE_CATALOG)}"
        )
    prof = np.asarray(profiles, dtype=np.complex128)
    if prof.ndim != 2:
        raise ShapeError(f"profiles must be (n_modes, dof), got {prof.shape}")
    if lipschitz_L < 0:
        raise ParameterError("lipschitz_L must be nonnegative")
    spec = SigmaSpec(
        kind="pointwise_lipschitz",
        lipschitz_L=float(lipschitz_L),
        func_name=func_name,
        profiles=prof,
    )
    return _check_declared_l(spec, lambdas)


def evaluate_sigma(spec: SigmaSpec, u: Trajectory) -> np.ndarray:
    """Integrand family Z(u), shape (n_modes, n_steps, dof).

    Memoryless in time, so the family is adapted whenever u is.
    """
    if spec.dof != u.dof:
        raise ShapeError(f"sigma has dof {spec.dof}, trajectory has dof {u.dof}")
    k = spec.n_modes
    n, dof = u.values.shape
    out = np.empty((k, n, dof), dtype=np.complex128)
    if spec.kind == "affine":
        if spec.c1.ndim == 1:
            out[:] = spec.c0[:, None, :] + spec.c1[:, None, None] * u.values[None, :, :]
        else:
            for i in range(k):
                out[i] = spec.c0[i][None, :] + u.values @ spec.c1[i].T
    else:
        fn = POINTWISE_CATALOG[spec.func_name][0]
        g = fn(u.values.real) + 1j * fn(u.values.imag)
        out[:] = spec.profiles[:, None, :] * g[None, :, :]
    return out


# ---------------------------------------------------------------- integral

def _as_family(z, path: WienerPath) -> np.ndarray:
    if isinstance(z, (list, tuple)):
        for traj in z:
            if traj.grid != path.grid:
                raise ShapeError("integrand grid does not match the path grid")
        z = np.stack([traj.values for traj in z], axis=0)
    z = np.asarray(z, dtype=np.complex128)
    if z.ndim != 3:
        raise ShapeError(f"integrand family must be (n_modes, n_steps, dof), got {z.shape}")
    if z.shape[0] != path.n_modes:
        raise ShapeError(f"family has {z.shape[0]} modes, path has {path.n_modes}")
    if z.shape[1] != path.grid.n_steps:
        raise ShapeError(
            f"family has {z.shape[1]} steps, path grid has {path.grid.n_steps}"
        )
    return z


def ito_integral(z, path: WienerPath) -> Trajectory:
    """Left-point stochastic integral of an adapted family against a path.

    out_n = sum_{m < n} sum_k sqrt(lambda_k) * Z_k[m] * increment_k[m+1],
    so out_0 = 0 exactly and entry n never looks past step n.

    Args:
        z: (n_modes, n_steps, dof) array or a list of per-mode Trajectories.
        path: sampled increments; grids and mode counts must match.
    """
    zf = _as_family(z, path)
    n = path.grid.n_steps
    out = np.zeros((n, zf.shape[2]), dtype=np.complex128)
    if n > 1:
        w = np.sqrt(path.lambdas)
        weighted_inc = path.increments[1:, :] * w[None, :]  # (n-1, K)
        contrib = np.einsum("kmd,mk->md", zf[:, : n - 1, :], weighted_inc)
        np.cumsum(contrib, axis=0, out=contrib)
        out[1:] = contrib
    return Trajectory(path.grid, out)


def noise_norm(z, lambdas, grid: TimeGrid) -> float:
    """sqrt(sum_k lambda_k ||Z_k||^2) in the weighted trajectory norm."""
    lam = np.asarray(lambdas, dtype=float)
    zf = np.asarray(z, dtype=np.complex128)
    if zf.ndim != 3 or zf.shape[0] != lam.shape[0] or zf.shape[1] != grid.n_steps:
        raise ShapeError("family shape does not match lambdas and grid")
    w = grid.weights()
    per_mode = np.einsum("n,knd,knd->k", w, np.abs(zf), np.abs(zf)) * grid.dt
    return float(np.sqrt(np.sum(lam * per_mode)))


def isometry_bias_factor(nu: float, dt: float) -> float:
    """Expected ratio of the two isometry sides on the backward grid.

    rho = 2*nu*dt*exp(-2*nu*dt) / (1 - exp(-2*nu*dt)) = 1 - nu*dt + O(dt^2);
    the discrete left-point integral undershoots the continuum constant
    1/(2*nu) by exactly this factor in the infinite-horizon limit.
    """
    x = 2.0 * nu * dt
    return x * math.exp(-x) / (1.0 - math.exp(-x))


@dataclass(frozen=True)
class IsometryReport:
    lhs: float          # mean squared weighted norm of the integral
    rhs: float          # mean of ||Z||^2_noise / (2*nu)
    ratio: float        # lhs / rhs
    se: float           # delta-method standard error of the ratio
    n_paths: int
    bias_factor: float  # rho(dt), the O(dt) grid bias documented above


def verify_ito_isometry(
    z_generator: Callable[[WienerPath, np.random.Generator], np.ndarray],
    grid: TimeGrid,
    lambdas,
    n_paths: int,
    embedding=None,
    base_seed: int = 0,
    n_threads: int = 1,
) -> IsometryReport:
    """Monte Carlo check of the squared-norm identity for the integral.

    For each path p: lhs_p = ||integral of Z||^2 in the weighted norm and
    rhs_p = ||Z||^2_noise / (2*nu).  Reports the two means, their ratio,
    and a delta-method standard error.  The ratio is expected near the bias
    factor rho(dt) = 1 - nu*dt + O(dt^2), not exactly one: left-point
    integration on the backward grid undershoots by O(dt).

    Per-path results land in preallocated slots indexed by path number, so
    the outcome is independent of thread count and scheduling.

    Args:
        z_generator: callable (path, rng) -> adapted (K, n_steps, dof) family.
        grid: time grid shared by all paths.
        lambdas: mode variances.
        n_paths: Monte Carlo sample size.
        embedding: optional (K, dof) mode shapes, identity if omitted.
        base_seed: root of the per-path seed tree.
        n_threads: worker threads; results are bitwise the same for any value.
    """
    lam = np.asarray(lambdas, dtype=float)
    k = lam.shape[0]
    if embedding is None:
        embedding = np.eye(k)
    if n_paths < 2:
        raise ParameterError("need at least 2 paths for a standard error")
    seeds = np.random.SeedSequence(base_seed).spawn(n_paths)
    lhs = np.empty(n_paths)
    rhs = np.empty(n_paths)

    def run(p: int) -> None:
        path_seed, gen_seed = seeds[p].spawn(2)
        path = sample_path(grid, k, lam, embedding, path_seed)
        z = z_generator(path, np.random.default_rng(gen_seed))
        lhs[p] = weighted_norm(ito_integral(z, path)) ** 2
        rhs[p] = noise_norm(z, lam, grid) ** 2 / (2.0 * grid.nu)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(run, range(n_paths)))
    else:
        for p in range(n_paths):
            run(p)

    mean_lhs = float(np.mean(lhs))
    mean_rhs = float(np.mean(rhs))
    ratio = mean_lhs / mean_rhs
    resid = lhs - ratio * rhs
    se = float(np.std(resid, ddof=1) / (mean_rhs * math.sqrt(n_paths)))
    return IsometryReport(
        lhs=mean_lhs,
        rhs=mean_rhs,
        ratio=ratio,
        se=se,
        n_paths=n_paths,
        bias_factor=isometry_bias_factor(grid.nu, grid.dt),
    )
