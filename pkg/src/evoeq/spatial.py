"""Staggered-grid first-order differential blocks, skew-adjoint by construction.

The one-dimensional primitive pairs a derivative taking interior-node values
to cell values (homogeneous boundary values dropped from the stencil) with
its negative transpose taking cell values to interior-face values.  Tensor
products of the primitive assemble gradient/divergence pairs in one to three
dimensions, the edge/face curl pair in three dimensions, and a second-order
block that is skew with respect to a gradient-weighted inner product.

Every assembled block satisfies A + A^H == 0 entrywise (weighted variants
W A + (W A)^H == 0); the constructor verifies the identity and the builders
arrange matrix structure so it holds with zero floating error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, ShapeError
from .matlaw import MaterialLaw, pencil_law

__all__ = [
    "SpaceDescriptor",
    "BlockOperator",
    "build_grad_div",
    "build_curl_pair",
    "build_edge_gradient",
    "build_laplacian_block",
    "apply_variable_coefficient",
    "dirichlet_laplacian",
]

SKEW_TOL = 1e-12

AXIS_NAMES = ("x", "y", "z")


def _as_tuple(value, dimension: int, name: str, cast):
    if np.isscalar(value):
        return tuple(cast(value) for _ in range(dimension))
    out = tuple(cast(v) for v in value)
    if len(out) != dimension:
        raise ShapeError(f"{name} needs {dimension} entries, got {len(out)}")
    return out


@dataclass(frozen=True, eq=False)
class SpaceDescriptor:
    """Axis-aligned box meshed by uniform cells.

    extent and n_cells may be given as scalars (reused per axis) or
    per-axis sequences; layout is filled in by the operator builders and
    maps component names to dof ranges of the assembled block.
    """

    dimension: int
    extent: tuple  # box side lengths
    n_cells: tuple  # cells per axis
    layout: Optional[dict] = None  # component name -> slice

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2, 3):
            raise ParameterError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        extent = _as_tuple(self.extent, self.dimension, "extent", float)
        cells = _as_tuple(self.n_cells, self.dimension, "n_cells", int)
        for axis, (ln, nc) in enumerate(zip(extent, cells)):
            if not ln > 0:
                raise ParameterError(f"extent along axis {axis} must be positive, got {ln}")
            if nc < 1:
                raise ParameterError(f"n_cells along axis {axis} must be >= 1, got {nc}")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "n_cells", cells)

    @property
    def h(self) -> tuple:
        return tuple(ln / nc for ln, nc in zip(self.extent, self.n_cells))

    def with_layout(self, layout: dict) -> "SpaceDescriptor":
        return SpaceDescriptor(self.dimension, self.extent, self.n_cells, layout)


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Square sparse block, skew-adjoint in the plain or weighted pairing."""

    space: SpaceDescriptor
    matrix: sp.csr_matrix
    bc_tag: str
    weight: Optional[sp.csr_matrix] = None  # inner-product matrix, identity if None

    def __post_init__(self) -> None:
        m = self.matrix.tocsr().astype(np.complex128)
        if m.shape[0] != m.shape[1]:
            raise ShapeError(f"block matrix must be square, got {m.shape}")
        object.__setattr__(self, "matrix", m)
        if self.weight is not None:
            w = self.weight.tocsr().astype(np.complex128)
            if w.shape != m.shape:
                raise ShapeError("weight shape does not match the block matrix")
            object.__setattr__(self, "weight", w)
        defect = self.skew_defect()
        scale = max(1.0, abs(m).max() if m.nnz else 0.0)
        if defect > SKEW_TOL * scale:
            raise ParameterError(f"block is not skew-adjoint, defect {defect:.3e}")

    @property
    def dof(self) -> int:
        return self.matrix.shape[0]

    def skew_defect(self) -> float:
        """Largest entry of A + A^H (of W A + (W A)^H when weighted)."""
        m = self.matrix if self.weight is None else (self.weight @ self.matrix).tocsr()
        d = m + m.getH()
        return float(abs(d).max()) if d.nnz else 0.0


# ----------------------------------------------------------- 1d primitives

def _diff_interior_nodes(n_cells: int, h: float) -> sp.csr_matrix:
    """Derivative from n_cells-1 interior nodes to n_cells cells.

    Boundary node values are dropped from the stencil (homogeneous data).
    """
    return sp.diags(
        [np.full(n_cells - 1, 1.0 / h), np.full(n_cells - 1, -1.0 / h)],
        offsets=[0, -1],
        shape=(n_cells, n_cells - 1),
    ).tocsr()


def _diff_cells(n_cells: int, h: float) -> sp.csr_matrix:
    """Derivative from n_cells cells to n_cells-1 interior faces.

    Exactly the negative transpose of _diff_interior_nodes, so the adjoint
    pairing holds with zero floating error.
    """
    return (-_diff_interior_nodes(n_cells, h).T).tocsr()


def _kron_chain(mats) -> sp.csr_matrix:
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


def _eye(n: int) -> sp.csr_matrix:
    return sp.identity(n, format="csr")


def _require_cells(space: SpaceDescriptor, minimum: int = 2) -> None:
    for axis, nc in enumerate(space.n_cells):
        if nc < minimum:
            raise ParameterError(
                f"need at least {minimum} cells along axis {axis}, got {nc}"
            )


def _grad_stack_dirichlet(space: SpaceDescriptor) -> tuple[sp.csr_matrix, list]:
    """Gradient from interior nodes to per-axis flux grids, stacked."""
    cells = space.n_cells
    hs = space.h
    d = space.dimension
    blocks = []
    shapes = []
    for a in range(d):
        mats = []
        shape = []
        for b in range(d):
            if b == a:
                mats.append(_diff_interior_nodes(cells[b], hs[b]))
                shape.append(cells[b])
            else:
                mats.append(_eye(cells[b] - 1))
                shape.append(cells[b] - 1)
        blocks.append(_kron_chain(mats))
        shapes.append(tuple(shape))
    return sp.vstack(blocks, format="csr"), shapes


def _grad_stack_neumann(space: SpaceDescriptor) -> tuple[sp.csr_matrix, list]:
    """Gradient from cells to per-axis interior-face grids, stacked."""
    cells = space.n_cells
    hs = space.h
    d = space.dimension
    blocks = []
    shapes = []
    for a in range(d):
        mats = []
        shape = []
        for b in range(d):
            if b == a:
                mats.append(_diff_cells(cells[b], hs[b]))
                shape.append(cells[b] - 1)
            else:
                mats.append(_eye(cells[b]))
                shape.append(cells[b])
        blocks.append(_kron_chain(mats))
        shapes.append(tuple(shape))
    return sp.vstack(blocks, format="csr"), shapes


def _skew_pair_matrix(g: sp.csr_matrix) -> sp.csr_matrix:
    # [[0, -G^T], [G, 0]]: the divergence row is exactly the negative
    # transpose of the gradient row, so skewness is structural
    return sp.bmat([[None, -g.T], [g, None]], format="csr").astype(np.complex128)


def build_grad_div(space: SpaceDescriptor, dirichlet_on_grad: bool) -> BlockOperator:
    """Assemble the first-order block pairing a gradient with a divergence.

    Args:
        space: mesh descriptor, needs at least 2 cells per axis.
        dirichlet_on_grad: True places homogeneous data on the scalar
            component (gradient acts on interior nodes); False places it on
            the flux (gradient acts on cells, divergence keeps interior
            faces only).

    Returns:
        BlockOperator with layout entries "u" (scalar block) and "q" (flux
        block, per-axis slices "q_x", "q_y", "q_z" as applicable).
    """
    _require_cells(space)
    if dirichlet_on_grad:
        g, shapes = _grad_stack_dirichlet(space)
        tag = "dirichlet"
    else:
        g, shapes = _grad_stack_neumann(space)
        tag = "neumann"
    n_q, n_u = g.shape
    layout = {"u": slice(0, n_u), "q": slice(n_u, n_u + n_q)}
    offset = n_u
    for a, shape in enumerate(shapes):
        size = int(np.prod(shape))
        layout[f"q_{AXIS_NAMES[a]}"] = slice(offset, offset + size)
        offset += size
    return BlockOperator(
        space=space.with_layout(layout), matrix=_skew_pair_matrix(g), bc_tag=tag
    )


def dirichlet_laplacian(space: SpaceDescriptor) -> sp.csr_matrix:
    """Second-order operator G^T G on interior nodes, exactly symmetrized."""
    _require_cells(space)
    g, _ = _grad_stack_dirichlet(space)
    k = (g.T @ g).tocsr()
    return ((k + k.T) * 0.5).tocsr()


# -------------------------------------------------------------------- curl

def _curl_layouts(space: SpaceDescriptor):
    cells = space.n_cells
    inner = tuple(n - 1 for n in cells)
    # edge-type components: along the axis on cells, transverse on interior nodes
    e_shapes = [
        (cells[0], inner[1], inner[2]),
        (inner[0], cells[1], inner[2]),
        (inner[0], inner[1], cells[2]),
    ]
    # face-type components: along the axis on interior nodes, transverse on cells
    h_shapes = [
        (inner[0], cells[1], cells[2]),
        (cells[0], inner[1], cells[2]),
        (cells[0], cells[1], inner[2]),
    ]
    return e_shapes, h_shapes


def _partial(space: SpaceDescriptor, comp_shape: tuple, axis: int) -> sp.csr_matrix:
    """Derivative along one axis of an edge-type component.

    The component lives on interior nodes along `axis` (size n-1) and the
    result lands on cells there (size n); other axes are untouched.
    """
    mats = []
    for b in range(3):
        if b == axis:
            mats.append(_diff_interior_nodes(space.n_cells[b], space.h[b]))
        else:
            mats.append(_eye(comp_shape[b]))
    return _kron_chain(mats)


def build_curl_pair(space: SpaceDescriptor) -> BlockOperator:
    """Assemble the 3d block pairing a curl with an interior curl.

    Tangential edge components on the boundary are dropped (homogeneous
    tangential data on the edge field); the face-side curl is exactly the
    transpose of the edge-side curl, making the block skew with zero
    floating error.  Only dimension 3 is meaningful.

    Returns:
        BlockOperator with layout entries "e", "h" and per-axis slices
        "e_x" .. "h_z".
    """
    if space.dimension != 3:
        raise ParameterError(f"curl pair needs dimension 3, got {space.dimension}")
    _require_cells(space)
    e_shapes, _h_shapes = _curl_layouts(space)

    def dpart(comp: int, axis: int) -> sp.csr_matrix:
        return _partial(space, e_shapes[comp], axis)

    # rows: face components of curl(edge field); columns: edge components
    curl_int = sp.bmat(
        [
            [None, -dpart(1, 2), dpart(2, 1)],
            [dpart(0, 2), None, -dpart(2, 0)],
            [-dpart(0, 1), dpart(1, 0), None],
        ],
        format="csr",
    )
    n_h, n_e = curl_int.shape
    layout = {"e": slice(0, n_e), "h": slice(n_e, n_e + n_h)}
    offset = 0
    for name, shapes in (("e", e_shapes), ("h", _h_shapes)):
        for a, shape in enumerate(shapes):
            size = int(np.prod(shape))
            layout[f"{name}_{AXIS_NAMES[a]}"] = slice(offset, offset + size)
            offset += size
    return BlockOperator(
        space=space.with_layout(layout),
        matrix=_skew_pair_matrix(curl_int),
        bc_tag="maxwell",
    )


def build_edge_gradient(space: SpaceDescriptor) -> sp.csr_matrix:
    """Gradient from interior nodes into the edge layout of the curl pair.

    Composing the interior curl with this matrix gives exactly zero, which
    the tests assert entry by entry.
    """
    if space.dimension != 3:
        raise ParameterError(f"edge gradient needs dimension 3, got {space.dimension}")
    _require_cells(space)
    cells = space.n_cells
    hs = space.h
    inner = tuple(n - 1 for n in cells)
    blocks = []
    for a in range(3):
        mats = []
        for b in range(3):
            if b == a:
                mats.append(_diff_interior_nodes(cells[b], hs[b]))
            else:
                mats.append(_eye(inner[b]))
        blocks.append(_kron_chain(mats))
    return sp.vstack(blocks, format="csr")


# --------------------------------------------------- second-order block

def build_laplacian_block(space: SpaceDescriptor) -> BlockOperator:
    """Assemble [[0, I], [-K, 0]] with K the interior-node second-order form.

    The block is skew with respect to the weighted pairing diag(K, I): the
    first component is measured in the gradient inner product.  K is
    symmetrized exactly so the weighted identity holds entrywise.

    Returns:
        BlockOperator with weight diag(K, I) and layout entries "u", "v".
    """
    _require_cells(space)
    k = dirichlet_laplacian(space)
    n = k.shape[0]
    eye = _eye(n)
    matrix = sp.bmat([[None, eye], [-k, None]], format="csr").astype(np.complex128)
    weight = sp.block_diag([k, eye], format="csr").astype(np.complex128)
    layout = {"u": slice(0, n), "v": slice(n, 2 * n)}
    return BlockOperator(
        space=space.with_layout(layout),
        matrix=matrix,
        bc_tag="dirichlet-h1",
        weight=weight,
    )


# ------------------------------------------------- variable coefficients

def apply_variable_coefficient(a_cells, op: BlockOperator) -> MaterialLaw:
    """Turn a positive cell coefficient into the matching material law.

    For the first-order pair (scalar u, flux q) with coefficient a on the
    flux constitutive relation, the law is M(z) = diag(0, a^-1) + z*diag(1, 0):
    the scalar block integrates, the flux block is weighted by 1/a.

    Args:
        a_cells: positive scalar or per-flux-dof array.
        op: a block from build_grad_div.

    Returns:
        Pencil MaterialLaw matching op's dof layout.
    """
    if op.bc_tag not in ("dirichlet", "neumann"):
        raise ParameterError(f"expected a grad/div block, got bc_tag {op.bc_tag!r}")
    layout = op.space.layout
    n_u = layout["u"].stop - layout["u"].start
    n_q = layout["q"].stop - layout["q"].start
    a = np.asarray(a_cells, dtype=float)
    if a.ndim == 0:
        a = np.full(n_q, float(a))
    if a.shape != (n_q,):
        raise ShapeError(f"coefficient needs {n_q} entries, got shape {a.shape}")
    bad = np.flatnonzero(~(a > 0.0))
    if bad.size:
        i = int(bad[0])
        raise ParameterError(
            f"coefficient at cell {i} is not positive definite: {a[i]}"
        )
    m0 = sp.diags(np.concatenate([np.zeros(n_u), 1.0 / a])).tocsr()
    m1 = sp.diags(np.concatenate([np.ones(n_u), np.zeros(n_q)])).tocsr()
    return pencil_law(m0, m1)
