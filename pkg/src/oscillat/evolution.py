"""Wave-equation operator functions, Duhamel evolution, and an FD oracle.

The operators cos(t A^(1/2)) and A^(-1/2) sin(t A^(1/2)) are realized
through a full symmetric eigendecomposition; at desk scale this is the
simplest exact form of the spectral calculus and keeps per-mode energies
conserved to machine precision.  A Stoermer-Verlet integrator provides an
independent check that never touches the eigenbasis.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.interpolate import CubicSpline

from .errors import EigSolverFailure, CFLViolation, ForcingGridTooCoarse
from .dirichlet import (
    DiscreteDirichletOperator,
    Corrector,
    ExtensionOperator,
    extend,
    steklov,
    bD_nodal,
)
from .coefficients import eval_scaled_grid
from .cell import CellSolution
from .lattice import Lattice, unit_lattice

_DENSE_EIG_LIMIT = 4096


@dataclass(frozen=True)
class EigenBasis:
    """Orthonormal eigenpairs of a positive definite discrete operator."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: DiscreteDirichletOperator = field(repr=False)

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.eigenvectors.conj().T @ v

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ coeffs

    def map_spectrum(self, factors: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.synthesize(factors * self.project(v))


@dataclass(frozen=True)
class EvolutionResult:
    times: np.ndarray
    u: np.ndarray
    du_dt: np.ndarray
    energy: np.ndarray


def spectral_decompose(op: DiscreteDirichletOperator) -> EigenBasis:
    """Full eigendecomposition, ascending; validates the spectral contract."""
    if op.size > 2 * _DENSE_EIG_LIMIT:
        raise EigSolverFailure(
            f"{op.size} unknowns exceed the eigensolver limit "
            f"{2 * _DENSE_EIG_LIMIT}; evolution runs are desk-scale by design")
    dense = op.matrix.toarray()
    if np.abs(dense.imag).max() == 0.0:
        dense = dense.real
    try:
        mu, Q = scipy.linalg.eigh(dense)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover
        raise EigSolverFailure(str(exc)) from exc
    if mu[0] <= 0.0:
        raise EigSolverFailure(f"non-positive eigenvalue {mu[0]:.3e}")
    resid = np.linalg.norm(dense @ Q - Q * mu, axis=0)
    if (resid > 1e-8 * np.maximum(mu, 1e-300)).any():
        raise EigSolverFailure("eigen residual exceeds 1e-8 * mu")
    return EigenBasis(eigenvalues=mu, eigenvectors=Q, source=op)


def _cos_factors(mu: np.ndarray, t: float) -> np.ndarray:
    return np.cos(t * np.sqrt(mu))


def _sinc_factors(mu: np.ndarray, t) -> np.ndarray:
    """sin(t sqrt(mu)) / sqrt(mu) with a series branch near sqrt(mu)|t| = 0."""
    root = np.sqrt(np.asarray(mu, dtype=float))
    t_arr = np.asarray(t, dtype=float)
    arg = root * t_arr
    root_b = np.broadcast_to(root, arg.shape)
    t_b = np.broadcast_to(t_arr, arg.shape)
    small = np.abs(arg) < 1e-6
    out = np.where(small, 0.0, np.sin(arg) / np.where(small, 1.0, root_b))
    if small.any():
        a2 = arg[small] ** 2
        out[small] = t_b[small] * (1.0 - a2 / 6.0 + a2 ** 2 / 120.0)
    return out


def op_cosine(eb: EigenBasis, t: float, v: np.ndarray) -> np.ndarray:
    """cos(t A^(1/2)) v; the identity at t = 0."""
    return eb.map_spectrum(_cos_factors(eb.eigenvalues, t), v)


def op_sine_scaled(eb: EigenBasis, t: float, v: np.ndarray) -> np.ndarray:
    """A^(-1/2) sin(t A^(1/2)) v; equals the time integral of the cosine."""
    return eb.map_spectrum(_sinc_factors(eb.eigenvalues, t), v)


def op_inv_sqrt(eb: EigenBasis, v: np.ndarray) -> np.ndarray:
    return eb.map_spectrum(1.0 / np.sqrt(eb.eigenvalues), v)


def op_power(eb: EigenBasis, power: float, v: np.ndarray) -> np.ndarray:
    return eb.map_spectrum(eb.eigenvalues ** power, v)


# ---------------------------------------------------------------------------
# Duhamel evolution


def _gauss_panels(t: float, max_width: float, order: int = 8):
    """Composite Gauss-Legendre nodes/weights on [0, t]."""
    n_panels = max(1, int(np.ceil(t / max_width)))
    edges = np.linspace(0.0, t, n_panels + 1)
    xi, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * xi + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


class _Forcing:
    """Cubic-spline interpolation of time-sampled forcing in eigenspace."""

    def __init__(self, eb: EigenBasis, t_grid, values, t_max: float):
        t_grid = np.asarray(t_grid, dtype=float)
        values = np.asarray(values)
        if t_grid.ndim != 1 or values.shape[0] != t_grid.size:
            raise ForcingGridTooCoarse("forcing needs matching time grid and samples")
        if t_grid.size < 4:
            raise ForcingGridTooCoarse("cubic interpolation needs >= 4 time samples")
        if t_grid[0] > 0.0 or t_grid[-1] < t_max - 1e-12:
            raise ForcingGridTooCoarse(
                f"forcing grid [{t_grid[0]}, {t_grid[-1]}] does not cover [0, {t_max}]")
        proj = values @ eb.eigenvectors.conj()  # (T, modes)
        self.spline = CubicSpline(t_grid, proj, axis=0)

    def at(self, times: np.ndarray) -> np.ndarray:
        return self.spline(times)


def solve_ibvp(eb: EigenBasis, phi: np.ndarray, psi: np.ndarray,
               forcing=None, t_list=(1.0,)) -> EvolutionResult:
    """Evaluate the three-term Duhamel formula at the requested times.

    forcing is None or a pair (t_grid, samples) with samples of shape
    (len(t_grid), ndof); the convolution integral uses composite
    Gauss-Legendre panels of width <= min(0.1, t/4) with the forcing
    interpolated by cubic splines.
    """
    mu = eb.eigenvalues
    phi_hat = eb.project(np.asarray(phi))
    psi_hat = eb.project(np.asarray(psi))
    t_list = np.asarray(list(t_list), dtype=float)
    force = None
    if forcing is not None:
        force = _Forcing(eb, forcing[0], forcing[1], float(t_list.max(initial=0.0)))

    u_out, du_out, energy = [], [], []
    for t in t_list:
        u_hat = _cos_factors(mu, t) * phi_hat + _sinc_factors(mu, t) * psi_hat
        du_hat = (-np.sqrt(mu) * np.sin(t * np.sqrt(mu)) * phi_hat
                  + _cos_factors(mu, t) * psi_hat)
        if force is not None and t > 0.0:
            nodes, weights = _gauss_panels(t, min(0.1, t / 4.0))
            f_hat = force.at(nodes)  # (q, modes)
            u_hat = u_hat + ((_sinc_factors(mu[None, :], (t - nodes)[:, None])
                              * f_hat) * weights[:, None]).sum(axis=0)
            du_hat = du_hat + ((np.cos((t - nodes)[:, None] * np.sqrt(mu)[None, :])
                                * f_hat) * weights[:, None]).sum(axis=0)
        u_out.append(eb.synthesize(u_hat))
        du_out.append(eb.synthesize(du_hat))
        energy.append(float(np.sum(np.abs(du_hat) ** 2)
                            + np.sum(mu * np.abs(u_hat) ** 2)))
    return EvolutionResult(times=t_list, u=np.array(u_out),
                           du_dt=np.array(du_out), energy=np.array(energy))


# ---------------------------------------------------------------------------
# first-order approximation and fluxes


def first_order_approx(u0_path: EvolutionResult, cell: CellSolution, eps: float,
                       smoothed: bool, sym, ext_op: ExtensionOperator,
                       lat: Lattice | None = None) -> EvolutionResult:
    """v_eps(t) = u0(t) + eps * corrector(extend(u0(t))) on the same mesh."""
    lat = lat or unit_lattice(ext_op.mesh.dim)
    cor = Corrector(cell, eps, sym, ext_op, lat, smoothed=smoothed)
    v = np.array([u0 + eps * cor.apply(u0) for u0 in u0_path.u])
    return EvolutionResult(times=u0_path.times, u=v, du_dt=u0_path.du_dt.copy(),
                           energy=u0_path.energy.copy())


def flux(u_path: EvolutionResult, coeffs, eps: float, mesh,
         lat: Lattice | None = None) -> np.ndarray:
    """p_eps = g^eps b(D) u by centered differences; shape (T, nodes, m)."""
    lat = lat or unit_lattice(mesh.dim)
    sym = coeffs.symbol
    g_eps = eval_scaled_grid(coeffs.g, lat, eps, mesh.axes())
    out = []
    for u in u_path.u:
        bdu = bD_nodal(mesh, sym, u)
        out.append(np.einsum("...ij,...j->...i", g_eps, bdu).reshape(-1, sym.m))
    return np.array(out)


def flux_approx(u0_path: EvolutionResult, cell: CellSolution, eps: float,
                smoothed: bool, coeffs, ext_op: ExtensionOperator,
                lat: Lattice | None = None) -> np.ndarray:
    """g̃^eps (S_eps) b(D) ũ0 + g^eps (b(D)Λ̃)^eps (S_eps) ũ0 on interior nodes."""
    mesh = ext_op.mesh
    lat = lat or unit_lattice(mesh.dim)
    sym = coeffs.symbol
    axes = ext_op.axes_ext()
    g_tilde_eps = eval_scaled_grid(cell.g_tilde, lat, eps, axes)
    g_eps = eval_scaled_grid(coeffs.g, lat, eps, axes)
    bdlt_eps = eval_scaled_grid(cell.bD_LambdaTilde, lat, eps, axes)
    out = []
    for u0 in u0_path.u:
        u_ext = extend(u0, ext_op, n=sym.n)
        s = u_ext
        if smoothed:
            s = steklov(u_ext, lat, eps, mesh.h, margin=ext_op.margin)
        bds = np.zeros(s.shape[:-1] + (sym.m,), dtype=complex)
        for l, b in enumerate(sym.b_mats):
            roll_p = np.zeros_like(s)
            roll_m = np.zeros_like(s)
            sl_up = _slice_axis(s.ndim - 1, l, slice(1, None))
            sl_lo = _slice_axis(s.ndim - 1, l, slice(0, -1))
            roll_p[sl_lo] = s[sl_up]
            roll_m[sl_up] = s[sl_lo]
            dl = -1j * (roll_p - roll_m) / (2.0 * mesh.h[l])
            bds += np.einsum("...n,mn->...m", dl, b)
        total = np.einsum("...ij,...j->...i", g_tilde_eps, bds)
        total += np.einsum("...ij,...jk,...k->...i", g_eps, bdlt_eps, s)
        sl = ext_op.interior_slices()
        out.append(total[sl].reshape(-1, sym.m))
    return np.array(out)


def _slice_axis(ndim_grid, ax, sl):
    out = [slice(None)] * (ndim_grid + 1)
    out[ax] = sl
    return tuple(out)


# ---------------------------------------------------------------------------
# leapfrog oracle


def estimate_mu_max(op: DiscreteDirichletOperator, iters: int = 60) -> float:
    """Power-iteration estimate of the largest eigenvalue."""
    rng = np.random.default_rng(4321)
    x = rng.standard_normal(op.size)
    if op.matrix.dtype.kind == "c":
        x = x.astype(complex)
    x /= np.linalg.norm(x)
    mu = 0.0
    for _ in range(iters):
        y = op.matrix @ x
        mu = float(np.vdot(x, y).real)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
    return mu


def leapfrog_oracle(op: DiscreteDirichletOperator, phi, psi, forcing,
                    t: float, dt: float, return_velocity: bool = False):
    """Stoermer-Verlet integration of u'' = -A u + F from (phi, psi) to time t.

    forcing is None or a callable t -> vector.  Second-order accurate and
    independent of any eigendecomposition; dt must satisfy the CFL bound
    dt <= 1.9 / sqrt(mu_max).
    """
    mu_max = estimate_mu_max(op)
    dt_cfl = 1.9 / np.sqrt(mu_max) if mu_max > 0 else np.inf
    if dt > dt_cfl:
        raise CFLViolation(f"dt={dt:.3e} exceeds CFL bound {dt_cfl:.3e}")
    n_steps = max(1, int(np.ceil(t / dt - 1e-12)))
    dt_eff = t / n_steps
    dtype = np.result_type(op.matrix.dtype, np.asarray(phi).dtype,
                           np.asarray(psi).dtype, float)
    u = np.array(phi, dtype=dtype, copy=True)
    v = np.array(psi, dtype=dtype, copy=True)
    f_now = forcing(0.0) if forcing is not None else 0.0
    acc = -(op.matrix @ u) + f_now
    for k in range(n_steps):
        v_half = v + 0.5 * dt_eff * acc
        u = u + dt_eff * v_half
        f_next = forcing((k + 1) * dt_eff) if forcing is not None else 0.0
        acc = -(op.matrix @ u) + f_next
        v = v_half + 0.5 * dt_eff * acc
    if return_velocity:
        return u, v
    return u


def leapfrog_energy_drift(op: DiscreteDirichletOperator, phi, psi,
                          t: float, dt: float, n_checks: int = 20) -> float:
    """Max relative drift of |v|^2 + u*Au along an unforced leapfrog run."""
    times = np.linspace(t / n_checks, t, n_checks)
    def energy(u, v):
        return float(np.vdot(v, v).real + np.vdot(u, op.matrix @ u).real)
    e0 = energy(np.asarray(phi, dtype=float), np.asarray(psi, dtype=float))
    worst = 0.0
    u, v = np.array(phi, dtype=float), np.array(psi, dtype=float)
    t_prev = 0.0
    for tk in times:
        u, v = leapfrog_oracle(op, u, v, None, tk - t_prev, dt,
                               return_velocity=True)
        worst = max(worst, abs(energy(u, v) - e0) / abs(e0))
        t_prev = tk
    return worst
