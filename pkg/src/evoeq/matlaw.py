"""Material laws in the causal integral variable, with coercivity checks.

A law is a matrix-valued function M(z) of one of three shapes:

- pencil:              M(z) = M0 + z*M1
- fractional diagonal: M(z) = diag(coeff_i * z**(1 - alpha_i))
- block indicator:     M(z) = diag(mask0) + z*diag(mask1), masks are 0/1

``apply_material`` substitutes the causal cumulative sum for z.
``verify_coercivity`` samples Re <z**-1 M(z) phi, phi> over the disc of
radius r centered at r (touching the origin from the right half plane) and
reports the smallest value found; a negative result is a finding about the
law, not an error.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigvalsh

from .errors import ParameterError, ShapeError
from .timegrid import Trajectory, d0_inv, gl_convolve

__all__ = [
    "MaterialLaw",
    "CoercivityReport",
    "LipschitzBudget",
    "pencil_law",
    "fractional_diagonal_law",
    "block_indicator_law",
    "apply_material",
    "material_symbol",
    "verify_coercivity",
    "lipschitz_budget",
]

# dense eigensolves for the exact per-z minimum are only attempted below this
DENSE_EIG_MAX_DOF = 1024

PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MaterialLaw:
    """Tagged union of the three supported law shapes.

    Exactly the fields of the active variant are populated; use the
    module-level constructors instead of instantiating directly.
    """

    variant: str                      # "pencil" | "fractional_diagonal" | "block_indicator"
    m0: Optional[sp.spmatrix] = None  # pencil: self-adjoint PSD part
    m1: Optional[sp.spmatrix] = None  # pencil: part multiplying z
    alphas: Optional[np.ndarray] = None  # fractional: per-dof order in (0, 1]
    coeffs: Optional[np.ndarray] = None  # fractional: per-dof positive coefficient
    mask0: Optional[np.ndarray] = None   # indicator: 0/1 per dof
    mask1: Optional[np.ndarray] = None   # indicator: 0/1 per dof

    @property
    def dof(self) -> int:
        if self.variant == "pencil":
            return self.m0.shape[0]
        if self.variant == "fractional_diagonal":
            return self.alphas.shape[0]
        return self.mask0.shape[0]

    def is_diagonal(self) -> bool:
        """True when M(z) is diagonal for every z."""
        if self.variant != "pencil":
            return True
        return _sparse_is_diagonal(self.m0) and _sparse_is_diagonal(self.m1)

    def pencil_parts(self) -> tuple[sp.spmatrix, sp.spmatrix]:
        """The (M0, M1) pair for laws that are affine in z."""
        if self.variant == "pencil":
            return self.m0, self.m1
        if self.variant == "block_indicator":
            return (
                sp.diags(self.mask0.astype(np.complex128)).tocsr(),
                sp.diags(self.mask1.astype(np.complex128)).tocsr(),
            )
        raise ParameterError("fractional law has no pencil form")


def _sparse_is_diagonal(m: sp.spmatrix) -> bool:
    coo = m.tocoo()
    return bool(np.all(coo.row == coo.col))


def _as_sparse(m, name: str) -> sp.csr_matrix:
    if sp.issparse(m):
        out = m.tocsr().astype(np.complex128)
    else:
        arr = np.asarray(m, dtype=np.complex128)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ShapeError(f"{name} must be a square matrix, got shape {arr.shape}")
        out = sp.csr_matrix(arr)
    if out.shape[0] != out.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {out.shape}")
    return out


def _check_psd(m: sp.csr_matrix, name: str) -> None:
    scale = max(1.0, float(abs(m).max()) if m.nnz else 0.0)
    asym = abs(m - m.getH()).max() if m.nnz else 0.0
    if asym > PSD_TOL * scale:
        raise ParameterError(f"{name} must be self-adjoint, asymmetry {asym:.3e}")
    if _sparse_is_diagonal(m):
        lo = float(m.diagonal().real.min()) if m.shape[0] else 0.0
    elif m.shape[0] <= DENSE_EIG_MAX_DOF:
        lo = float(eigvalsh(m.toarray())[0])
    else:
        from scipy.sparse.linalg import eigsh

        lo = float(eigsh(m, k=1, which="SA", return_eigenvectors=False)[0])
    if lo < -PSD_TOL * scale:
        raise ParameterError(f"{name} must be positive semidefinite, min eig {lo:.3e}")


def pencil_law(m0, m1) -> MaterialLaw:
    """Law M(z) = M0 + z*M1 with M0 self-adjoint positive semidefinite."""
    m0s = _as_sparse(m0, "m0")
    m1s = _as_sparse(m1, "m1")
    if m0s.shape != m1s.shape:
        raise ShapeError(f"m0 and m1 disagree: {m0s.shape} vs {m1s.shape}")
    _check_psd(m0s, "m0")
    return MaterialLaw(variant="pencil", m0=m0s, m1=m1s)


def fractional_diagonal_law(alphas, coeffs=None) -> MaterialLaw:
    """Law M(z) = diag(coeff_i * z**(1 - alpha_i)), orders in (0, 1]."""
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    if a.ndim != 1 or a.size == 0:
        raise ShapeError("alphas must be a nonempty 1d array")
    if np.any(a <= 0.0) or np.any(a > 1.0):
        bad = a[(a <= 0.0) | (a > 1.0)][0]
        raise ParameterError(f"fractional orders must lie in (0, 1], got {bad}")
    if coeffs is None:
        c = np.ones_like(a)
    else:
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if c.shape != a.shape:
            raise ShapeError(f"coeffs shape {c.shape} does not match alphas {a.shape}")
        if np.any(c <= 0.0):
            raise ParameterError("fractional coefficients must be positive")
    return MaterialLaw(variant="fractional_diagonal", alphas=a, coeffs=c)


def block_indicator_law(mask0, mask1) -> MaterialLaw:
    """Law M(z) = diag(mask0) + z*diag(mask1) with 0/1 masks.

    Every dof must be claimed by at least one mask, otherwise its type is
    undefined (the law would vanish identically on it).
    """
    p0 = np.atleast_1d(np.asarray(mask0, dtype=float))
    p1 = np.atleast_1d(np.asarray(mask1, dtype=float))
    if p0.shape != p1.shape or p0.ndim != 1:
        raise ShapeError(f"masks must be 1d of equal length, got {p0.shape}, {p1.shape}")
    for name, m in (("mask0", p0), ("mask1", p1)):
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ParameterError(f"{name} must contain only 0 and 1")
    uncovered = np.flatnonzero((p0 == 0.0) & (p1 == 0.0))
    if uncovered.size:
        raise ParameterError(
            f"dof {int(uncovered[0])} is claimed by neither mask; every dof needs a type"
        )
    return MaterialLaw(variant="block_indicator", mask0=p0, mask1=p1)


# ------------------------------------------------------------------ apply

def _rows_times_matrix(m: sp.spmatrix, values: np.ndarray) -> np.ndarray:
    # apply m to every row of values: rows are states, m acts on states
    return np.asarray((m @ values.T).T)


def apply_material(law: MaterialLaw, u: Trajectory) -> Trajectory:
    """Realize M at the causal cumulative sum and apply it to a trajectory.

    Pencil and indicator laws reduce to M0*u + M1*(d0_inv u); the fractional
    diagonal applies the Grunwald-Letnikov integral of order (1 - alpha_i)
    scaled by coeff_i, one dof column at a time (orders are grouped so each
    distinct alpha costs one convolution pass).
    """
    if law.dof != u.dof:
        raise ShapeError(f"law has dof {law.dof}, trajectory has dof {u.dof}")
    if law.variant == "pencil":
        iu = d0_inv(u)
        vals = _rows_times_matrix(law.m0, u.values) + _rows_times_matrix(law.m1, iu.values)
        return Trajectory(u.grid, vals)
    if law.variant == "block_indicator":
        iu = d0_inv(u)
        vals = law.mask0[None, :] * u.values + law.mask1[None, :] * iu.values
        return Trajectory(u.grid, vals)
    out = np.empty_like(u.values)
    for alpha in np.unique(law.alphas):
        cols = law.alphas == alpha
        if alpha == 1.0:
            # z**0 is the identity, keep it exact
            out[:, cols] = u.values[:, cols]
        else:
            out[:, cols] = gl_convolve(u.values[:, cols], alpha - 1.0, u.grid.dt)
        out[:, cols] *= law.coeffs[cols][None, :]
    return Trajectory(u.grid, out)


def material_symbol(law: MaterialLaw, z: complex) -> np.ndarray:
    """Dense M(z) at a single point, for diagnostics and small problems."""
    if law.variant == "pencil":
        return law.m0.toarray() + z * law.m1.toarray()
    if law.variant == "fractional_diagonal":
        return np.diag(law.coeffs * z ** (1.0 - law.alphas))
    return np.diag(law.mask0 + z * law.mask1)


# ------------------------------------------------------------- coercivity

@dataclass(frozen=True)
class CoercivityReport:
    r: float           # radius of the sampled disc centered at r
    c_est: float       # smallest sampled Re <z^-1 M(z) phi, phi>
    n_samples: int     # number of z samples
    worst_z: complex   # where the minimum occurred


def _symbol_scaled_diag(law: MaterialLaw, z: complex) -> np.ndarray:
    """Diagonal of z**-1 M(z) for diagonal laws."""
    if law.variant == "fractional_diagonal":
        return law.coeffs * z ** (-law.alphas)
    if law.variant == "block_indicator":
        return law.mask0 / z + law.mask1.astype(np.complex128)
    d0_diag = law.m0.diagonal()
    d1_diag = law.m1.diagonal()
    return d0_diag / z + d1_diag


def verify_coercivity(
    law: MaterialLaw,
    r: float,
    n_z: int = 256,
    n_phi: int = 8,
    seed: int = 0,
) -> CoercivityReport:
    """Sample the accretivity of z**-1 M(z) over the disc B(r, r).

    Draws n_z points uniformly from the open disc of radius r centered at r
    (skipping the numerically degenerate sliver |z| < r*1e-6) and, per point,
    minimizes Re <z**-1 M(z) phi, phi> over unit vectors: exactly for
    diagonal laws and via the smallest eigenvalue of the Hermitian part for
    moderate dense sizes, plus n_phi random unit probes otherwise.
    Deterministic for a fixed seed.

    Returns:
        CoercivityReport with the smallest value found; negative values are
        reported, not raised.
    """
    if not r > 0:
        raise ParameterError(f"r must be positive, got {r}")
    if n_z < 1 or n_phi < 1:
        raise ParameterError("need at least one z and one phi sample")
    rng = np.random.default_rng(seed)
    dof = law.dof
    diagonal = law.is_diagonal()
    dense_ok = not diagonal and dof <= DENSE_EIG_MAX_DOF

    c_est = math.inf
    worst = complex(r, 0.0)
    accepted = 0
    while accepted < n_z:
        batch = n_z - accepted
        rad = r * np.sqrt(rng.uniform(size=batch))
        ang = rng.uniform(0.0, 2.0 * math.pi, size=batch)
        zs = r + rad * np.exp(1j * ang)
        zs = zs[np.abs(zs) >= r * 1e-6]
        for z in zs:
            z = complex(z)
            if diagonal:
                val = float(np.min(_symbol_scaled_diag(law, z).real))
            elif dense_ok:
                b = material_symbol(law, z) / z
                h = 0.5 * (b + b.conj().T)
                val = float(eigvalsh(h)[0])
            else:
                # too large to densify: random unit probes on the sparse form
                m0, m1 = law.pencil_parts()
                bop = m0.multiply(1.0 / z) + m1
                val = math.inf
                for _ in range(n_phi):
                    phi = rng.normal(size=dof) + 1j * rng.normal(size=dof)
                    phi /= np.linalg.norm(phi)
                    val = min(val, float(np.real(np.vdot(phi, bop @ phi))))
            if val < c_est:
                c_est = val
                worst = z
        accepted += len(zs)
    return CoercivityReport(r=r, c_est=c_est, n_samples=accepted, worst_z=worst)


# -------------------------------------------------------- iteration budget

@dataclass(frozen=True)
class LipschitzBudget:
    """Contraction bookkeeping for a Lipschitz perturbation of size L.

    nu_min is the smallest weight rate at which the fixed-point factor
    q(nu) = L / (c * sqrt(2*nu)) drops below one; strict contraction needs
    nu > nu_min.
    """

    c: float
    L: float
    nu_min: float

    def q(self, nu: float) -> float:
        if not nu > 0:
            raise ParameterError(f"nu must be positive, got {nu}")
        return self.L / (self.c * math.sqrt(2.0 * nu))


def lipschitz_budget(c: float, L: float) -> LipschitzBudget:
    """Budget the weight rate needed to absorb a Lipschitz constant L.

    Args:
        c: coercivity constant of the linear part, must be positive.
        L: Lipschitz constant of the perturbation, must be nonnegative.
    """
    if not c > 0:
        raise ParameterError(f"coercivity constant must be positive, got {c}")
    if L < 0:
        raise ParameterError(f"Lipschitz constant must be nonnegative, got {L}")
    return LipschitzBudget(c=c, L=L, nu_min=L * L / (2.0 * c * c))
