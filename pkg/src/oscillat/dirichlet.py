"""Discrete Dirichlet operators on boxes, extension, smoothing, correctors.

Grid functions live on the interior nodes of a uniform mesh over
O = prod (0, L_k), stored node-major with the n vector components minor.
The oscillating operator is assembled from the quadratic form: the principal
part uses Q1 elements with the coefficient frozen at each cell midpoint
(exact element integrals, so no spurious kernel modes), lower-order terms
are collocated at nodes with centered differences and symmetrized, which
keeps every assembled matrix hermitian at machine precision.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ResolutionViolation,
    NotPositiveDefinite,
    LambdaSearchFailed,
    MarginTooSmall,
    NearSpectrumShift,
)
from .lattice import Lattice, unit_lattice
from .coefficients import (
    CoefficientSet,
    Symbol,
    eval_scaled_grid,
    inv_sup_opnorm,
)
from .cell import CellSolution

#: mesh spacing must not exceed eps times this factor
H_OVER_EPS = 1.0 / 16.0

#: dense eigenvalue probe below this size, inverse power iteration above
_DENSE_PROBE_LIMIT = 4096


# ---------------------------------------------------------------------------
# meshes and discrete norms


@dataclass(frozen=True)
class Mesh:
    """Uniform tensor mesh on a box with homogeneous Dirichlet boundary."""

    dim: int
    box: tuple
    m_int: tuple
    h: tuple

    @property
    def shape(self) -> tuple:
        return self.m_int

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.m_int))

    @property
    def sigma(self) -> float:
        """Volume weight of one node (uniform lumped mass)."""
        return float(np.prod(self.h))

    def axes(self) -> list[np.ndarray]:
        """Interior node coordinates per axis."""
        return [self.h[k] * np.arange(1, self.m_int[k] + 1)
                for k in range(self.dim)]

    def midpoint_axes(self) -> list[np.ndarray]:
        """Cell midpoint coordinates per axis (M_k + 1 cells)."""
        return [self.h[k] * (np.arange(self.m_int[k] + 1) + 0.5)
                for k in range(self.dim)]

    def to_grid(self, vec: np.ndarray, n: int) -> np.ndarray:
        return np.asarray(vec).reshape(self.m_int + (n,))

    def from_grid(self, grid: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(grid).reshape(-1)


def make_mesh(box, m_int) -> Mesh:
    box = tuple(float(L) for L in np.atleast_1d(box))
    m_int = tuple(int(M) for M in np.atleast_1d(m_int))
    d = len(box)
    if d not in (1, 2):
        raise ValueError("meshes support d in {1, 2}")
    if any(M < 3 for M in m_int):
        raise ValueError("need at least 3 interior nodes per axis")
    h = tuple(L / (M + 1) for L, M in zip(box, m_int))
    return Mesh(dim=d, box=box, m_int=m_int, h=h)


def mesh_for(box, h_max: float) -> Mesh:
    """Finest-grained mesh with h_k <= h_max on every axis."""
    box = tuple(float(L) for L in np.atleast_1d(box))
    m_int = tuple(max(3, int(np.ceil(L / h_max)) - 1) for L in box)
    return make_mesh(box, m_int)


def l2_norm(mesh: Mesh, vec: np.ndarray) -> float:
    return float(np.sqrt(mesh.sigma) * np.linalg.norm(vec))


def grad_sq(mesh: Mesh, vec: np.ndarray, n: int) -> float:
    """Discrete |Du|^2 over interior edges.

    Boundary edges are excluded: quantities such as corrector differences
    carry a nonzero trace on the box boundary, and the error estimates
    under study use the Sobolev norm of the open domain, not of the
    zero extension.
    """
    grid = mesh.to_grid(vec, n)
    total = 0.0
    for ax in range(mesh.dim):
        diff = np.diff(grid, axis=ax) / mesh.h[ax]
        total += mesh.sigma * float(np.sum(np.abs(diff) ** 2))
    return total


def h1_norm(mesh: Mesh, vec: np.ndarray, n: int) -> float:
    return float(np.sqrt(l2_norm(mesh, vec) ** 2 + grad_sq(mesh, vec, n)))


def bD_nodal(mesh: Mesh, sym: Symbol, vec: np.ndarray) -> np.ndarray:
    """b(D)u at interior nodes by centered differences (zero boundary).

    Returns grid values of shape mesh.shape + (m,).
    """
    grid = mesh.to_grid(vec, sym.n)
    out = np.zeros(mesh.shape + (sym.m,), dtype=complex)
    for l, b in enumerate(sym.b_mats):
        pad = [(0, 0)] * (mesh.dim + 1)
        pad[l] = (1, 1)
        padded = np.pad(grid, pad)
        up = padded[_ax_slice(mesh.dim, l, slice(2, None))]
        dn = padded[_ax_slice(mesh.dim, l, slice(0, -2))]
        dl = -1j * (up - dn) / (2.0 * mesh.h[l])
        out += np.einsum("...n,mn->...m", dl, b)
    return out


def _ax_slice(ndim_grid, ax, sl):
    out = [slice(None)] * (ndim_grid + 1)
    out[ax] = sl
    return tuple(out)


# ---------------------------------------------------------------------------
# discrete operators


class DiscreteDirichletOperator:
    """Sparse hermitian positive-definite operator on interior nodes."""

    def __init__(self, matrix, mesh: Mesh, n: int, eps_tag, lam: float,
                 smallest_eig: float):
        self.matrix = matrix.tocsr()
        self.mesh = mesh
        self.n = n
        self.eps_tag = eps_tag
        self.lam = lam
        self.smallest_eig = smallest_eig
        self._factors = {}

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v):
        return self.matrix @ v

    def factor(self, zeta=0.0):
        key = complex(zeta)
        if key not in self._factors:
            mat = self.matrix
            if key != 0:
                mat = mat - key * sp.identity(self.size, dtype=mat.dtype,
                                              format="csr")
            real_ok = (key.imag == 0.0
                       and np.abs(mat.imag.data).max(initial=0.0) == 0.0)
            mat = mat.real if real_ok else mat.astype(complex)
            self._factors[key] = (spla.splu(mat.tocsc()), real_ok)
        return self._factors[key]

    def solve_shifted(self, zeta, rhs):
        lu, real_ok = self.factor(zeta)
        rhs = np.asarray(rhs)
        if real_ok and np.isrealobj(rhs):
            return lu.solve(rhs.astype(float))
        if real_ok:
            return lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
        return lu.solve(rhs.astype(complex))


def smallest_eigenvalue(matrix, iters: int = 200, tol: float = 1e-8) -> float:
    """Probe for the smallest eigenvalue of a sparse hermitian matrix.

    Exact (dense) below _DENSE_PROBE_LIMIT unknowns; above that, inverse
    power iteration at shift zero, which is accurate once the operator is
    positive definite.  Returns 0.0 when the matrix cannot be factorized.
    """
    size = matrix.shape[0]
    if size <= _DENSE_PROBE_LIMIT:
        dense = matrix.toarray()
        if np.abs(dense.imag).max() == 0.0:
            dense = dense.real
        return float(np.linalg.eigvalsh(dense)[0])
    try:
        lu = spla.splu(matrix.tocsc())
    except RuntimeError:
        return 0.0
    rng = np.random.default_rng(1234)
    x = rng.standard_normal(size)
    if matrix.dtype.kind == "c":
        x = x.astype(complex)
    x /= np.linalg.norm(x)
    rho_old = np.inf
    for _ in range(iters):
        y = lu.solve(x)
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0.0:
            return 0.0
        rho = float((np.vdot(y, x) / np.vdot(y, y)).real)
        x = y / ny
        if abs(rho - rho_old) <= tol * max(abs(rho), 1e-300):
            return rho
        rho_old = rho
    return rho_old


# element integrals for Q1 bases on one cell of size h
def _elem_1d(h):
    K = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    M = h * np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    C = np.array([[-0.5, -0.5], [0.5, 0.5]])  # C[a, b] = int N_a' N_b
    return K, M, C


def _grad_tensors(mesh: Mesh):
    """S[l', l, q, p] = int over one cell of d_{l'} phi_q d_l phi_p."""
    d = mesh.dim
    if d == 1:
        K, _, _ = _elem_1d(mesh.h[0])
        return K.reshape(1, 1, 2, 2)
    K1, M1, C1 = _elem_1d(mesh.h[0])
    K2, M2, C2 = _elem_1d(mesh.h[1])
    S = np.zeros((2, 2, 4, 4))
    idx = lambda a, b: 2 * a + b
    for a in range(2):
        for b in range(2):
            for c in range(2):
                for e in range(2):
                    q, p = idx(a, b), idx(c, e)
                    S[0, 0, q, p] = K1[a, c] * M2[b, e]
                    S[1, 1, q, p] = M1[a, c] * K2[b, e]
                    S[0, 1, q, p] = C1[a, c] * C2[e, b]
                    S[1, 0, q, p] = C1[c, a] * C2[b, e]
    return S


def _principal_form(mesh: Mesh, sym: Symbol, g_cells: np.ndarray):
    """Assemble the principal form with per-cell constant coefficients.

    g_cells holds the (m x m) coefficient at every cell midpoint, shape
    (M_1+1, .., M_d+1, m, m).  Returns a sparse form matrix over all nodes
    (boundary included), node-major with n components per node.
    """
    d, n = mesh.dim, sym.n
    S = _grad_tensors(mesh)
    bmat = np.stack([np.asarray(b, dtype=complex) for b in sym.b_mats])
    cells = g_cells.reshape(-1, sym.m, sym.m)
    # B[c, l', l] = b_{l'}^H G_c b_l  (n x n blocks)
    B = np.einsum("aim,cij,bjn->cabmn", bmat.conj(), cells, bmat)
    elem = np.einsum("abqp,cabmn->cqpmn", S, B)

    full_shape = tuple(M + 2 for M in mesh.m_int)
    n_cells_ax = [M + 1 for M in mesh.m_int]
    cell_grids = np.meshgrid(*[np.arange(c) for c in n_cells_ax], indexing="ij")
    corners = [np.array(off) for off in np.ndindex(*(2,) * d)]
    node_of = []
    for off in corners:
        coords = [cg + o for cg, o in zip(cell_grids, off)]
        node_of.append(np.ravel_multi_index(coords, full_shape).ravel())

    n_corner = len(corners)
    rows, cols, data = [], [], []
    comp_i, comp_j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    for q in range(n_corner):
        for p in range(n_corner):
            blocks = elem[:, q, p]  # (n_cells, n, n)
            r = (node_of[q][:, None, None] * n + comp_i).ravel()
            c = (node_of[p][:, None, None] * n + comp_j).ravel()
            rows.append(r)
            cols.append(c)
            data.append(blocks.reshape(-1))
    size = int(np.prod(full_shape)) * n
    form = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size)).tocsr()
    return form, full_shape


def _interior_dofs(mesh: Mesh, full_shape, n: int):
    interior = np.meshgrid(*[np.arange(1, M + 1) for M in mesh.m_int],
                           indexing="ij")
    nodes = np.ravel_multi_index(interior, full_shape).ravel()
    return (nodes[:, None] * n + np.arange(n)).ravel()


def _centered_diff(mesh: Mesh, axis: int):
    """Sparse D_axis = -i * centered difference on interior nodes."""
    mats = []
    for k, M in enumerate(mesh.m_int):
        if k == axis:
            off = np.ones(M - 1)
            D = sp.diags([off, -off], [1, -1], format="csr")
            mats.append(D * (-1j / (2.0 * mesh.h[k])))
        else:
            mats.append(sp.identity(M, format="csr"))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def _block_diag_field(values: np.ndarray):
    """Sparse block-diagonal matrix from per-node (n x n) blocks."""
    n_nodes, n = values.shape[0], values.shape[1]
    shape = (n_nodes, n, n)
    rows = np.broadcast_to(np.arange(n_nodes)[:, None, None] * n
                           + np.arange(n)[None, :, None], shape).ravel()
    cols = np.broadcast_to(np.arange(n_nodes)[:, None, None] * n
                           + np.arange(n)[None, None, :], shape).ravel()
    return sp.coo_matrix((values.ravel(), (rows, cols)),
                         shape=(n_nodes * n, n_nodes * n)).tocsr()


def _finalize(form, mesh: Mesh, n: int, eps_tag, lam: float, check_pd: bool):
    op_mat = (form / mesh.sigma).tocsr()
    op_mat = (op_mat + op_mat.conj().T) * 0.5
    if np.abs(op_mat.imag.data).max(initial=0.0) == 0.0:
        op_mat = op_mat.real
    probe = smallest_eigenvalue(op_mat)
    if check_pd and probe <= 0.0:
        raise NotPositiveDefinite(
            f"smallest-eigenvalue probe {probe:.3e} <= 0 (shift too small?)")
    return DiscreteDirichletOperator(op_mat, mesh, n, eps_tag, lam, probe)


def assemble_b_eps(mesh: Mesh, coeffs: CoefficientSet, eps: float,
                   lat: Lattice | None = None,
                   check_pd: bool = True) -> DiscreteDirichletOperator:
    """Assemble the oscillating operator at scale eps on the given mesh."""
    if eps <= 0 or eps > 1:
        raise ValueError("eps must lie in (0, 1]")
    if max(mesh.h) > eps * H_OVER_EPS * (1 + 1e-12):
        raise ResolutionViolation(
            f"h={max(mesh.h):.3e} exceeds eps/16={eps * H_OVER_EPS:.3e}")
    lat = lat or unit_lattice(mesh.dim)
    sym, n = coeffs.symbol, coeffs.symbol.n

    g_cells = eval_scaled_grid(coeffs.g, lat, eps, mesh.midpoint_axes())
    form, full_shape = _principal_form(mesh, sym, g_cells)
    dofs = _interior_dofs(mesh, full_shape, n)
    form = form[dofs][:, dofs]

    sigma = mesh.sigma
    node_axes = mesh.axes()
    if coeffs.a:
        for j, aj in enumerate(coeffs.a):
            vals = eval_scaled_grid(aj, lat, eps, node_axes).reshape(-1, n, n)
            X = _block_diag_field(vals) @ _centered_diff_block(mesh, j, n)
            form = form + sigma * (X + X.conj().T)
    if coeffs.Q is not None:
        vals = eval_scaled_grid(coeffs.Q, lat, eps, node_axes).reshape(-1, n, n)
        form = form + sigma * _block_diag_field(vals)
    if coeffs.lam:
        form = form + sigma * coeffs.lam * sp.identity(form.shape[0])
    return _finalize(form, mesh, n, float(eps), coeffs.lam, check_pd)


def _centered_diff_block(mesh: Mesh, axis: int, n: int):
    return sp.kron(_centered_diff(mesh, axis), sp.identity(n), format="csr")


def assemble_b0(mesh: Mesh, cell: CellSolution, coeffs: CoefficientSet,
                check_pd: bool = True) -> DiscreteDirichletOperator:
    """Assemble the constant-coefficient effective operator on the mesh."""
    sym, n = coeffs.symbol, coeffs.symbol.n
    n_cells = tuple(M + 1 for M in mesh.m_int)
    g_cells = np.broadcast_to(cell.g0, n_cells + cell.g0.shape)
    form, full_shape = _principal_form(mesh, sym, g_cells)
    dofs = _interior_dofs(mesh, full_shape, n)
    form = form[dofs][:, dofs]

    sigma = mesh.sigma
    n_nodes = mesh.n_nodes
    eye_nodes = sp.identity(n_nodes, format="csr")

    # -b(D)*V - V*b(D), assembled from the form -2 Re (V u, b(D) u)
    if np.abs(cell.V).max() > 0:
        BD = sum(sp.kron(_centered_diff(mesh, l), b, format="csr")
                 for l, b in enumerate(sym.b_mats))
        Vhat = sp.kron(eye_nodes, cell.V, format="csr")
        form = form - sigma * (BD.conj().T @ Vhat + Vhat.conj().T @ BD)

    for j, aj in enumerate(coeffs.a):
        cj = aj.mean()
        cj = cj + cj.conj().T
        if np.abs(cj).max() > 0:
            X = sp.kron(_centered_diff(mesh, j), cj, format="csr")
            form = form + sigma * 0.5 * (X + X.conj().T)

    zero_order = -np.asarray(cell.W, dtype=complex)
    if coeffs.Q is not None:
        zero_order = zero_order + coeffs.Q.mean()
    zero_order = zero_order + coeffs.lam * np.eye(n)
    if np.abs(zero_order).max() > 0:
        form = form + sigma * sp.kron(eye_nodes, zero_order, format="csr")
    return _finalize(form, mesh, n, "effective", coeffs.lam, check_pd)


def choose_lambda(mesh: Mesh, coeffs: CoefficientSet, eps_list,
                  lat: Lattice | None = None,
                  cell: CellSolution | None = None) -> float:
    """Smallest shift from {0, 1, 2, 4, ...} making every operator coercive.

    The margin demanded of the smallest-eigenvalue probe is
    0.25 * c_* * pi^2 / (max L_k)^2 with c_* = alpha0 / (4 |g^-1|_inf),
    a discrete stand-in for the coercivity constant of the principal part.
    """
    eps_list = list(eps_list)
    if not eps_list:
        raise ValueError("need at least one eps")
    c_star = coeffs.symbol.alpha0 / (4.0 * inv_sup_opnorm(coeffs.g))
    margin = 0.25 * c_star * np.pi ** 2 / max(mesh.box) ** 2

    base = coeffs.with_lambda(0.0)
    probes = [assemble_b_eps(mesh, base, eps, lat, check_pd=False).smallest_eig
              for eps in eps_list]
    if cell is not None:
        probes.append(assemble_b0(mesh, cell, base, check_pd=False).smallest_eig)
    worst = min(probes)

    lam_grid = [0.0] + [float(2 ** k) for k in range(17)]
    for lam in lam_grid:
        if worst + lam >= margin:
            return lam
    raise LambdaSearchFailed(
        f"no shift up to 2^16 reaches margin {margin:.3e} from probe {worst:.3e}")


# ---------------------------------------------------------------------------
# extension, smoothing, correctors


@dataclass(frozen=True)
class ExtensionOperator:
    """Hestenes reflection (order 3) plus smooth cutoff around the box."""

    mesh: Mesh
    margin: float
    pad: tuple
    shape_ext: tuple
    cutoff: np.ndarray = field(repr=False)

    def axes_ext(self) -> list[np.ndarray]:
        return [self.mesh.h[k] * np.arange(-self.pad[k],
                                           self.mesh.m_int[k] + 2 + self.pad[k])
                for k in range(self.mesh.dim)]

    def interior_slices(self) -> tuple:
        return tuple(slice(p + 1, p + 1 + M)
                     for p, M in zip(self.pad, self.mesh.m_int))

    def restrict(self, ext_values: np.ndarray) -> np.ndarray:
        return self.mesh.from_grid(ext_values[self.interior_slices()])


def _smoothstep(t):
    """Quintic step: 1 at t=0, 0 at t=1, two vanishing derivatives at both ends."""
    t = np.clip(t, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def build_extension(mesh: Mesh, margin: float) -> ExtensionOperator:
    if margin <= 0:
        raise ValueError("margin must be positive")
    pad = tuple(int(np.ceil(margin / h)) for h in mesh.h)
    for p, M in zip(pad, mesh.m_int):
        if 3 * p > M + 1:
            raise MarginTooSmall(
                f"reflection stencil needs 3*pad={3 * p} <= M+1={M + 1}")
    shape_ext = tuple(M + 2 + 2 * p for p, M in zip(pad, mesh.m_int))
    profiles = []
    for k in range(mesh.dim):
        coords = mesh.h[k] * np.arange(-pad[k], mesh.m_int[k] + 2 + pad[k])
        dist = np.maximum(np.maximum(-coords, coords - mesh.box[k]), 0.0)
        profiles.append(_smoothstep(dist / margin))
    cutoff = profiles[0]
    for prof in profiles[1:]:
        cutoff = np.multiply.outer(cutoff, prof)
    return ExtensionOperator(mesh=mesh, margin=float(margin), pad=pad,
                             shape_ext=shape_ext, cutoff=cutoff)


def _reflect_axis(values: np.ndarray, axis: int, pad: int, m_int: int):
    """Order-3 Hestenes reflection across both faces of one axis."""
    left_face = pad          # index of the x=0 boundary node
    right_face = pad + m_int + 1
    sl = lambda i: _ax_slice(values.ndim - 1, axis, i)
    for j in range(1, pad + 1):
        values[sl(left_face - j)] = (6.0 * values[sl(left_face + j)]
                                     - 8.0 * values[sl(left_face + 2 * j)]
                                     + 3.0 * values[sl(left_face + 3 * j)])
        values[sl(right_face + j)] = (6.0 * values[sl(right_face - j)]
                                      - 8.0 * values[sl(right_face - 2 * j)]
                                      + 3.0 * values[sl(right_face - 3 * j)])
    return values


def extend(u: np.ndarray, op: ExtensionOperator, n: int = 1,
           apply_cutoff: bool = True) -> np.ndarray:
    """Extend an interior grid function to the enlarged box.

    Zero Dirichlet values are imposed on the boundary nodes, each face is
    reflected with the 3-term rule (matches value and two derivatives for
    smooth data), and the result is multiplied by the cutoff.  Restriction
    back to interior nodes reproduces u exactly.
    """
    mesh = op.mesh
    ext = np.zeros(op.shape_ext + (n,), dtype=np.result_type(u, float))
    ext[op.interior_slices()] = mesh.to_grid(u, n)
    for ax in range(mesh.dim):
        _reflect_axis(ext, ax, op.pad[ax], mesh.m_int[ax])
    if apply_cutoff:
        ext = ext * op.cutoff[..., None]
    return ext


def _shifted(values: np.ndarray, d: int, offsets, periodic: bool):
    """out[i] = values[i + offsets] with zero fill (or wraparound)."""
    out = values
    for ax in range(d):
        off = int(offsets[ax])
        if off == 0:
            continue
        if periodic:
            out = np.roll(out, -off, axis=ax)
            continue
        size = out.shape[ax]
        shifted = np.zeros_like(out)
        if off > 0:
            src = _ax_slice(out.ndim - 1, ax, slice(off, size))
            dst = _ax_slice(out.ndim - 1, ax, slice(0, size - off))
        else:
            src = _ax_slice(out.ndim - 1, ax, slice(0, size + off))
            dst = _ax_slice(out.ndim - 1, ax, slice(-off, size))
        shifted[dst] = out[src]
        out = shifted
    return out


_GAUSS_POINTS = 8


def steklov(u: np.ndarray, lat: Lattice, eps: float, spacing,
            periodic: bool = False, margin: float | None = None) -> np.ndarray:
    """Cell average (S_eps u)(x) = |cell|^-1 int u(x - eps z) dz on a grid.

    Tensor Gauss-Legendre quadrature (8 points per axis) over fractional
    cell coordinates with multilinear interpolation of u at the shifted
    points.  Out-of-range samples are zero (matching cutoff extensions)
    unless periodic=True.
    """
    d = lat.dim
    spacing = np.atleast_1d(np.asarray(spacing, dtype=float))
    if margin is not None and eps * lat.r1 > margin + 1e-12:
        raise MarginTooSmall(
            f"smoothing reach eps*r1={eps * lat.r1:.3e} exceeds margin {margin:.3e}")
    values = np.asarray(u)
    grid_only = values.ndim == d
    if grid_only:
        values = values[..., None]

    xi, w = np.polynomial.legendre.leggauss(_GAUSS_POINTS)
    xi, w = xi / 2.0, w / 2.0
    nodes = np.stack(np.meshgrid(*([xi] * d), indexing="ij"),
                     axis=-1).reshape(-1, d)
    weights = np.stack(np.meshgrid(*([w] * d), indexing="ij"),
                       axis=-1).reshape(-1, d).prod(axis=1)

    out = np.zeros_like(values, dtype=np.result_type(values, float))
    for tau, wq in zip(nodes, weights):
        shift = -eps * (tau @ lat.basis) / spacing  # grid units, per axis
        base = np.floor(shift).astype(int)
        frac = shift - base
        for corner in np.ndindex(*(2,) * d):
            cw = wq * np.prod(np.where(np.array(corner) == 1, frac, 1.0 - frac))
            out += cw * _shifted(values, d, base + np.array(corner), periodic)
    return out[..., 0] if grid_only else out


class Corrector:
    """Precomputed corrector (Λ^eps b(D) + Λ̃^eps)(S_eps or I) on one mesh."""

    def __init__(self, cell: CellSolution, eps: float, sym: Symbol,
                 ext_op: ExtensionOperator, lat: Lattice, smoothed: bool = True):
        if eps * lat.r1 > ext_op.margin + 1e-12:
            raise MarginTooSmall(
                f"eps*r1={eps * lat.r1:.3e} exceeds extension margin "
                f"{ext_op.margin:.3e}")
        self.eps = float(eps)
        self.sym = sym
        self.ext_op = ext_op
        self.lat = lat
        self.smoothed = smoothed
        axes = ext_op.axes_ext()
        self.lam_eps = eval_scaled_grid(cell.Lambda, lat, eps, axes)
        self.lam_tilde_eps = eval_scaled_grid(cell.LambdaTilde, lat, eps, axes)

    def apply_ext(self, u_ext: np.ndarray) -> np.ndarray:
        """Corrector of an extended grid function; returns interior dof vector."""
        mesh, h = self.ext_op.mesh, self.ext_op.mesh.h
        s = u_ext
        if self.smoothed:
            s = steklov(u_ext, self.lat, self.eps, h, margin=self.ext_op.margin)
        bds = np.zeros(s.shape[:-1] + (self.sym.m,), dtype=complex)
        for l, b in enumerate(self.sym.b_mats):
            up = _shifted(s, mesh.dim, np.eye(mesh.dim, dtype=int)[l], False)
            dn = _shifted(s, mesh.dim, -np.eye(mesh.dim, dtype=int)[l], False)
            dl = -1j * (up - dn) / (2.0 * h[l])
            bds += np.einsum("...n,mn->...m", dl, b)
        total = np.einsum("...nm,...m->...n", self.lam_eps, bds)
        total += np.einsum("...nk,...k->...n", self.lam_tilde_eps, s)
        return self.ext_op.restrict(total)

    def apply(self, u_interior: np.ndarray) -> np.ndarray:
        u_ext = extend(u_interior, self.ext_op, n=self.sym.n)
        return self.apply_ext(u_ext)


def corrector_apply(cell: CellSolution, eps: float, sym: Symbol,
                    u_ext: np.ndarray, smoothed: bool,
                    ext_op: ExtensionOperator,
                    lat: Lattice | None = None) -> np.ndarray:
    """One-shot corrector application (see Corrector for the cached form)."""
    lat = lat or unit_lattice(ext_op.mesh.dim)
    return Corrector(cell, eps, sym, ext_op, lat, smoothed).apply_ext(u_ext)


# ---------------------------------------------------------------------------
# resolvent solves


def resolvent(op: DiscreteDirichletOperator, zeta, f: np.ndarray) -> np.ndarray:
    """Solve (A - zeta I) u = f by a cached sparse LU factorization."""
    u = op.solve_shifted(complex(zeta), f)
    residual = op.matrix @ u - complex(zeta) * u - f
    denom = np.linalg.norm(f)
    if denom > 0 and np.linalg.norm(residual) > 1e-10 * denom:
        raise NearSpectrumShift(
            f"relative residual {np.linalg.norm(residual) / denom:.3e} "
            f"suggests zeta={zeta} is too close to the spectrum")
    return u
