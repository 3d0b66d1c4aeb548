"""Structured 2D quadrilateral mesh, sparse operator assembly, and a
preconditioned conjugate gradient solver.

All fields are plain numpy arrays. Element fields have length
``mesh.num_elements``; scalar nodal fields have length ``mesh.num_nodes``;
vector nodal fields are interleaved ``(ux0, uy0, ux1, uy1, ...)`` of length
``2 * mesh.num_nodes``. Nodes and elements are numbered row-major with x
fastest, bottom row first.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Mesh2D",
    "SparseOperator",
    "SolverError",
    "build_mesh",
    "assemble_scalar_filter_operator",
    "assemble_elasticity",
    "ElasticityAssembler",
    "element_mass_matrix",
    "element_laplace_matrix",
    "element_elasticity_matrix",
    "solve_spd",
]

# 2x2 Gauss-Legendre rule on [-1, 1]^2; exact for the bilinear products used here.
_GP = 1.0 / np.sqrt(3.0)
_GAUSS_POINTS = [(-_GP, -_GP), (_GP, -_GP), (_GP, _GP), (-_GP, _GP)]

# Reference-element corner signs, counterclockwise from bottom-left.
_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])


class SolverError(RuntimeError):
    """Iterative solve failed to reach the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class Mesh2D:
    """Uniform quadrilateral grid on [0, lx] x [0, ly].

    ``elements[e]`` lists the four corner nodes counterclockwise from the
    bottom-left. ``boundary_tags`` maps each boundary node to exactly one of
    {left, right, bottom, top}; corners are resolved with priority
    left > right > bottom > top.
    """

    nx: int
    ny: int
    lx: float
    ly: float
    nodes: np.ndarray = field(repr=False)
    elements: np.ndarray = field(repr=False)
    boundary_tags: dict = field(repr=False)

    @property
    def num_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def num_elements(self):
        return self.nx * self.ny

    @property
    def dx(self):
        return self.lx / self.nx

    @property
    def dy(self):
        return self.ly / self.ny

    @property
    def element_area(self):
        return self.dx * self.dy

    @property
    def domain_area(self):
        return self.lx * self.ly

    def element_centers(self):
        """(num_elements, 2) array of element midpoints."""
        return self.nodes[self.elements].mean(axis=1)


def build_mesh(nx, ny, lx, ly):
    """Build a structured quad mesh with ``nx * ny`` elements.

    Raises ValueError for non-positive element counts or extents.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"element counts must be >= 1, got nx={nx}, ny={ny}")
    if lx <= 0 or ly <= 0:
        raise ValueError(f"domain extents must be > 0, got lx={lx}, ly={ly}")

    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    # Bottom-left node of each element, then the CCW corner offsets.
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    n0 = (jj * (nx + 1) + ii).ravel()
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1]).astype(np.int32)

    ids = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    tags = {}
    for node in ids[:, -1]:
        tags[int(node)] = "right"
    for node in ids[:, 0]:
        tags[int(node)] = "left"
    for node in ids[0, 1:-1]:
        tags[int(node)] = "bottom"
    for node in ids[-1, 1:-1]:
        tags[int(node)] = "top"

    return Mesh2D(nx=nx, ny=ny, lx=float(lx), ly=float(ly), nodes=nodes,
                  elements=elements, boundary_tags=tags)


@dataclass
class SparseOperator:
    """Symmetric sparse matrix in compressed-row storage."""

    matrix: sp.csr_matrix = field(repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def row_offsets(self):
        return self.matrix.indptr

    @property
    def col_indices(self):
        return self.matrix.indices

    @property
    def values(self):
        return self.matrix.data

    def matvec(self, x):
        return self.matrix @ x

    def diagonal(self):
        return self.matrix.diagonal()

    def to_dense(self):
        return self.matrix.toarray()


def _shape_gradients(dx, dy, xi, eta):
    """Physical-coordinate gradients of the four bilinear shape functions."""
    dn_dx = _XI * (1.0 + _ETA * eta) / 4.0 * (2.0 / dx)
    dn_dy = _ETA * (1.0 + _XI * xi) / 4.0 * (2.0 / dy)
    return dn_dx, dn_dy


def element_mass_matrix(dx, dy):
    """4x4 consistent mass matrix of a dx-by-dy bilinear quad."""
    me = np.zeros((4, 4))
    detj = dx * dy / 4.0
    for xi, eta in _GAUSS_POINTS:
        n = (1.0 + _XI * xi) * (1.0 + _ETA * eta) / 4.0
        me += detj * np.outer(n, n)
    return me


def element_laplace_matrix(dx, dy):
    """4x4 stiffness matrix of the scalar Laplacian on a bilinear quad."""
    ke = np.zeros((4, 4))
    detj = dx * dy / 4.0
    for xi, eta in _GAUSS_POINTS:
        dn_dx, dn_dy = _shape_gradients(dx, dy, xi, eta)
        ke += detj * (np.outer(dn_dx, dn_dx) + np.outer(dn_dy, dn_dy))
    return ke


def element_elasticity_matrix(dx, dy, young_modulus, poisson_ratio):
    """8x8 plane-stress stiffness matrix of a bilinear quad (unit thickness).

    Dof order is (ux, uy) per node, nodes counterclockwise from bottom-left.
    """
    e, nu = young_modulus, poisson_ratio
    c = e / (1.0 - nu * nu) * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, (1.0 - nu) / 2.0],
    ])
    ke = np.zeros((8, 8))
    detj = dx * dy / 4.0
    for xi, eta in _GAUSS_POINTS:
        dn_dx, dn_dy = _shape_gradients(dx, dy, xi, eta)
        b = np.zeros((3, 8))
        b[0, 0::2] = dn_dx
        b[1, 1::2] = dn_dy
        b[2, 0::2] = dn_dy
        b[2, 1::2] = dn_dx
        ke += detj * (b.T @ c @ b)
    return ke


def _scatter_pattern(dof_map, ndof):
    """Precompute the COO->CSR scatter for a fixed element dof map.

    Returns (indptr, indices, slot, diag_slots) where ``slot[k]`` is the CSR
    data position of COO entry k, so repeated assemblies reduce to a bincount.
    """
    nper = dof_map.shape[1]
    rows = np.repeat(dof_map, nper, axis=1).ravel()
    cols = np.tile(dof_map, (1, nper)).ravel()
    order = np.lexsort((cols, rows))
    rs, cs = rows[order], cols[order]
    new = np.empty(len(rs), dtype=bool)
    new[0] = True
    new[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
    unique_id = np.cumsum(new) - 1
    slot = np.empty(len(rs), dtype=np.int64)
    slot[order] = unique_id
    nnz = int(unique_id[-1]) + 1
    indices = cs[new].astype(np.int32)
    counts = np.bincount(rs[new], minlength=ndof)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
    return indptr, indices, slot, nnz, rows, cols


def assemble_scalar_filter_operator(mesh, eps):
    """Assemble ``eps^2 * K + M`` for the screened-Poisson filter.

    Natural (zero-flux) boundary conditions: no constraints are applied, the
    mass part makes the operator SPD. The stiffness part annihilates
    constants.
    """
    if eps <= 0:
        raise ValueError(f"filter length scale must be > 0, got {eps}")
    ke = eps * eps * element_laplace_matrix(mesh.dx, mesh.dy) + element_mass_matrix(mesh.dx, mesh.dy)
    nn = mesh.num_nodes
    dof_map = mesh.elements.astype(np.int64)
    rows = np.repeat(dof_map, 4, axis=1).ravel()
    cols = np.tile(dof_map, (1, 4)).ravel()
    data = np.tile(ke.ravel(), mesh.num_elements)
    mat = sp.coo_matrix((data, (rows, cols)), shape=(nn, nn)).tocsr()
    return SparseOperator(mat)


class ElasticityAssembler:
    """Repeated global stiffness assembly ``sum_e r_e * Ke`` on one mesh.

    The sparsity pattern and the per-entry scatter are computed once so each
    assembly is a single weighted bincount. Optionally bakes a Dirichlet dof
    set into the pattern (rows/columns zeroed, unit diagonal), which keeps
    the matrix SPD for CG.
    """

    def __init__(self, mesh, young_modulus=1.0, poisson_ratio=0.3, constrained_dofs=None):
        if not 0 <= poisson_ratio < 0.5:
            raise ValueError(f"Poisson ratio must be in [0, 0.5), got {poisson_ratio}")
        self.mesh = mesh
        self.ke = element_elasticity_matrix(mesh.dx, mesh.dy, young_modulus, poisson_ratio)
        self.ndof = 2 * mesh.num_nodes
        elems = mesh.elements.astype(np.int64)
        dof_map = np.empty((mesh.num_elements, 8), dtype=np.int64)
        dof_map[:, 0::2] = 2 * elems
        dof_map[:, 1::2] = 2 * elems + 1
        self.dof_map = dof_map
        indptr, indices, slot, nnz, rows, cols = _scatter_pattern(dof_map, self.ndof)
        self._indptr, self._indices, self._slot, self._nnz = indptr, indices, slot, nnz
        self._ke_flat = self.ke.ravel()

        self._constrained = None
        self._drop = None
        self._diag_slots = None
        if constrained_dofs is not None:
            constrained = np.zeros(self.ndof, dtype=bool)
            constrained[np.asarray(constrained_dofs, dtype=np.int64)] = True
            self._constrained = constrained
            self._drop = constrained[rows] | constrained[cols]
            row_of_unique = np.repeat(np.arange(self.ndof), np.diff(indptr))
            diag = np.flatnonzero((row_of_unique == indices) & constrained[row_of_unique])
            self._diag_slots = diag

    def assemble(self, r):
        """Global matrix for element scaling factors ``r`` (all > 0)."""
        r = np.asarray(r, dtype=float)
        if r.shape != (self.mesh.num_elements,):
            raise ValueError(f"expected {self.mesh.num_elements} element values, got shape {r.shape}")
        if np.any(r <= 0):
            raise ValueError("element stiffness factors must be strictly positive")
        data = np.multiply.outer(r, self._ke_flat).ravel()
        if self._drop is not None:
            data = np.where(self._drop, 0.0, data)
        values = np.bincount(self._slot, weights=data, minlength=self._nnz)
        if self._diag_slots is not None:
            values[self._diag_slots] = 1.0
        mat = sp.csr_matrix((values, self._indices, self._indptr),
                            shape=(self.ndof, self.ndof))
        return SparseOperator(mat)

    def element_energies(self, u):
        """Per-element strain energy ``u_e^T Ke u_e`` (unit scaling factor)."""
        ue = u[self.dof_map]
        return np.einsum("ea,ab,eb->e", ue, self.ke, ue)


def assemble_elasticity(mesh, r, young_modulus=1.0, poisson_ratio=0.3):
    """Assemble the global elasticity matrix without boundary conditions.

    The result is symmetric and annihilates rigid-body translations; it
    becomes SPD only after Dirichlet constraints are applied (see
    ``solve_spd``).
    """
    return ElasticityAssembler(mesh, young_modulus, poisson_ratio).assemble(r)


def apply_dirichlet(op, dofs, rhs=None, values=None):
    """Row/column elimination with unit diagonal, preserving symmetry.

    Returns (constrained operator, modified rhs). The rhs is lifted with the
    prescribed values so the constrained entries of the solution come out
    exactly equal to ``values``.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    n = op.n
    constrained = np.zeros(n, dtype=bool)
    constrained[dofs] = True
    mat = op.matrix
    row_of = np.repeat(np.arange(n), np.diff(mat.indptr))
    keep_mask = ~(constrained[row_of] | constrained[mat.indices])
    data = np.where(keep_mask, mat.data, 0.0)
    out = sp.csr_matrix((data, mat.indices.copy(), mat.indptr.copy()), shape=(n, n))
    out = out + sp.csr_matrix((np.ones(len(dofs)), (dofs, dofs)), shape=(n, n))

    b = None
    if rhs is not None:
        if values is None:
            values = np.zeros(len(dofs))
        lift = np.zeros(n)
        lift[dofs] = values
        b = rhs - op.matvec(lift)
        b[dofs] = values
    return SparseOperator(out.tocsr()), b


def solve_spd(op, b, constraints=None, rel_tol=1e-10, x0=None, max_iters=None,
              callback=None):
    """Jacobi-preconditioned conjugate gradients for an SPD system.

    ``constraints`` is an optional ``(dof_indices, values)`` pair imposed by
    row/column elimination; constrained solution entries equal the prescribed
    values exactly. Convergence: ||b - Ax||_2 <= rel_tol * ||b||_2 over the
    free dofs. Returns ``(x, iterations)``.

    Raises SolverError if the iteration cap (default ``10 * n``) is exceeded.
    """
    b = np.asarray(b, dtype=float)
    if not 0 < rel_tol < 1:
        raise ValueError(f"rel_tol must be in (0, 1), got {rel_tol}")
    if constraints is not None:
        dofs, values = constraints
        op, b = apply_dirichlet(op, dofs, rhs=b, values=values)
        fixed = np.zeros(op.n, dtype=bool)
        fixed[np.asarray(dofs, dtype=np.int64)] = True
    else:
        fixed = None

    n = op.n
    if max_iters is None:
        max_iters = 10 * n

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if fixed is not None:
        x[fixed] = b[fixed]

    b_norm = np.linalg.norm(b if fixed is None else b[~fixed])
    if b_norm == 0.0:
        x_out = np.zeros(n)
        if fixed is not None:
            x_out[fixed] = b[fixed]
        return x_out, 0
    tol = rel_tol * b_norm

    a = op.matrix
    inv_diag = 1.0 / a.diagonal()
    r = b - a @ x
    if fixed is not None:
        r[fixed] = 0.0
    res = np.linalg.norm(r)
    if callback is not None:
        callback(res)
    if res <= tol:
        return x, 0

    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for k in range(1, max_iters + 1):
        ap = a @ p
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        res = np.linalg.norm(r)
        if callback is not None:
            callback(res)
        if res <= tol:
            return x, k
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not reach rel_tol={rel_tol} within {max_iters} iterations "
        f"(residual {res:.3e}, target {tol:.3e})",
        residual=res, iterations=max_iters)
